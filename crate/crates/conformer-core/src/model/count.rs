//! Parameter counting.
//!
//! The encoder is counted by walking its schema, so the number always
//! matches what [`build`](super::ConformerModel::build) would allocate. The
//! RNN-T decoder and joint network are never executed; they are counted by
//! closed formula only so that preset totals can be compared against the
//! published model sizes.

use crate::error::Result;
use crate::params::count_trainable;

use super::config::{ConformerConfig, Preset};
use super::conformer::conformer_schema;

/// Word-piece vocabulary size assumed by the decoder formula.
pub const VOCAB_SIZE: usize = 1000;
/// Joint-network width assumed by the decoder formula.
pub const JOINT_DIM: usize = 640;

/// Published size targets: preset, total parameter target, decoder width.
pub const PRESET_TARGETS: [(Preset, f64, usize); 3] = [
    (Preset::S, 10.3e6, 320),
    (Preset::M, 30.7e6, 640),
    (Preset::L, 118.8e6, 640),
];

/// Breakdown of a full model's parameter count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    /// Trainable encoder parameters, from the schema walk.
    pub encoder: usize,
    /// Decoder and joint parameters by formula; nothing is allocated.
    pub decoder_analytic: usize,
    /// `encoder + decoder_analytic`.
    pub total: usize,
}

/// Single-layer LSTM decoder over a `VOCAB_SIZE` word-piece vocabulary plus
/// the joint projection:
/// embedding `V*e`, LSTM `4*((e+h)*h + h)`, joint `(d+h)*j`, output `j*V`,
/// with `e = h = decoder_dim`, `d = encoder_dim`, `j = JOINT_DIM`.
pub fn decoder_analytic(encoder_dim: usize, decoder_dim: usize) -> usize {
    let (v, j) = (VOCAB_SIZE, JOINT_DIM);
    let (e, h) = (decoder_dim, decoder_dim);
    v * e + 4 * ((e + h) * h + h) + (encoder_dim + h) * j + j * v
}

/// Count a full model: encoder by schema walk, decoder by formula.
pub fn count_params(cfg: &ConformerConfig, decoder_dim: usize) -> Result<ParamCount> {
    cfg.validate()?;
    let encoder = count_trainable(&conformer_schema(cfg)?);
    let dec = decoder_analytic(cfg.d_model, decoder_dim);
    Ok(ParamCount {
        encoder,
        decoder_analytic: dec,
        total: encoder + dec,
    })
}

#[cfg(test)]
mod tests {
    use super::super::config::apply_ablation;
    use super::*;
    use crate::params::build_params;
    use crate::rng::{stream_rng, Stream};

    /// Closed form of the default-wiring encoder: subsampling stem
    /// `28d^2 + 10d` plus `L` blocks of `24d^2 + (28+k)d`.
    fn closed_form(num_layers: usize, d: usize, k: usize) -> usize {
        28 * d * d + 10 * d + num_layers * (24 * d * d + (28 + k) * d)
    }

    #[test]
    fn schema_walk_matches_closed_form() {
        for preset in [Preset::S, Preset::M, Preset::L] {
            let cfg = ConformerConfig::preset(preset);
            let count = count_params(&cfg, 640).unwrap();
            assert_eq!(
                count.encoder,
                closed_form(cfg.num_layers, cfg.d_model, cfg.conv_kernel),
                "{preset:?}"
            );
        }
    }

    #[test]
    fn preset_totals_are_frozen_and_within_published_tolerance() {
        let expect = [
            (Preset::S, 10_760_352usize),
            (Preset::M, 32_381_952),
            (Preset::L, 120_118_784),
        ];
        for ((preset, target, decoder_dim), (p2, frozen)) in PRESET_TARGETS.iter().zip(expect) {
            assert_eq!(*preset, p2);
            let cfg = ConformerConfig::preset(*preset);
            let count = count_params(&cfg, *decoder_dim).unwrap();
            assert_eq!(count.total, frozen, "{preset:?}");
            assert_eq!(count.total, count.encoder + count.decoder_analytic);
            let dev = (count.total as f64 - target) / target;
            assert!(dev.abs() < 0.10, "{preset:?} deviates {:.2}%", dev * 100.0);
        }
    }

    #[test]
    fn decoder_formula_spot_values() {
        // S: embed 320000 + lstm 820480 + joint 296960 + output 640000
        assert_eq!(decoder_analytic(144, 320), 2_077_440);
        // M and L share the decoder width, differ in the joint input
        assert_eq!(decoder_analytic(256, 640), 5_132_800);
        assert_eq!(decoder_analytic(512, 640), 5_296_640);
    }

    #[test]
    fn count_is_affine_in_depth() {
        let mut a = ConformerConfig::preset(Preset::S);
        let mut b = a.clone();
        let mut c = a.clone();
        a.num_layers = 4;
        b.num_layers = 5;
        c.num_layers = 6;
        let ca = count_params(&a, 320).unwrap().encoder;
        let cb = count_params(&b, 320).unwrap().encoder;
        let cc = count_params(&c, 320).unwrap().encoder;
        assert_eq!(cb - ca, cc - cb);
        assert!(cb > ca);
    }

    #[test]
    fn head_sweep_never_changes_the_count() {
        let base = ConformerConfig::preset(Preset::M);
        let reference = count_params(&base, 640).unwrap().total;
        for row in ["heads(4)", "heads(8)", "heads(16)", "heads(32)"] {
            let cfg = apply_ablation(&base, row).unwrap();
            assert_eq!(count_params(&cfg, 640).unwrap().total, reference, "{row}");
        }
    }

    #[test]
    fn kernel_sweep_changes_only_depthwise_rows() {
        let base = ConformerConfig::preset(Preset::L);
        let small = apply_ablation(&base, "kernel(3)").unwrap();
        let cb = count_params(&base, 640).unwrap().encoder;
        let cs = count_params(&small, 640).unwrap().encoder;
        assert_eq!(cb - cs, base.num_layers * (32 - 3) * base.d_model);
    }

    #[test]
    fn ablations_reduce_or_preserve_count_sensibly() {
        let base = ConformerConfig::preset(Preset::S);
        let reference = count_params(&base, 320).unwrap().encoder;
        let no_conv = apply_ablation(&base, "no_conv").unwrap();
        assert!(count_params(&no_conv, 320).unwrap().encoder < reference);
        let single = apply_ablation(&base, "single_ffn").unwrap();
        assert!(count_params(&single, 320).unwrap().encoder < reference);
        let parallel = apply_ablation(&base, "parallel").unwrap();
        // the merge projection adds 2d*d per block
        assert_eq!(
            count_params(&parallel, 320).unwrap().encoder,
            reference + base.num_layers * 2 * base.d_model * base.d_model
        );
    }

    #[test]
    fn schema_walk_equals_built_tree_elements() {
        let mut cfg = ConformerConfig::preset(Preset::S);
        cfg.num_layers = 2;
        cfg.d_model = 16;
        cfg.num_heads = 2;
        cfg.conv_kernel = 8;
        cfg.n_mels = 8;
        let schema = conformer_schema(&cfg).unwrap();
        let tree = build_params::<f64>(&schema, &mut stream_rng(0, Stream::Params)).unwrap();
        let built: usize = tree
            .entries()
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.tensor.len())
            .sum();
        assert_eq!(count_params(&cfg, 320).unwrap().encoder, built);
    }
}
