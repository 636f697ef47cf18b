use epr_revival::coincidence::coincidence_from_series;
use epr_revival::frames::{read_stack_from, write_stack_to, Frame, FrameGeometry, FrameStack};
use epr_revival::oam::{conditional_oam_clean, oam_uncertainty, OamNoiseModel};
use epr_revival::position::conditional_position_sigma;
use epr_revival::{beam_widths, derive_params};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frame_files_round_trip(
        w in 1u32..9,
        h in 1u32..9,
        hits in prop::collection::vec(prop::collection::vec(0u32..64, 0..20), 1..6),
        z in 0.0f64..2.0,
        seed in any::<u64>(),
    ) {
        let pixels = w * h;
        let frames = hits
            .into_iter()
            .map(|f| Frame::from_hits(f.into_iter().map(|p| p % pixels).collect()).unwrap())
            .collect();
        let stack = FrameStack {
            geometry: FrameGeometry::centred(w, h, 16e-6, 0.25),
            frames,
            z,
            seed,
            generation: None,
        };
        let mut bytes = Vec::new();
        write_stack_to(&stack, &mut bytes).unwrap();
        prop_assert_eq!(bytes.len(), 56 + 2 * (pixels as usize) * stack.frames.len());
        let back = read_stack_from(bytes.as_slice()).unwrap();
        prop_assert_eq!(&back.frames, &stack.frames);
        prop_assert_eq!(back.z.to_bits(), z.to_bits());
        prop_assert_eq!(back.seed, seed);
        let mut again = Vec::new();
        write_stack_to(&back, &mut again).unwrap();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn net_is_true_minus_accidental(
        series in prop::collection::vec((0u64..5, 0u64..5), 2..40),
    ) {
        let (np, nq): (Vec<u64>, Vec<u64>) = series.into_iter().unzip();
        let c = coincidence_from_series(&np, &nq).unwrap();
        let m = (np.len() - 1) as f64;
        let t: u64 = (0..np.len() - 1).map(|k| np[k] * nq[k]).sum();
        let a: u64 = (0..np.len() - 1).map(|k| np[k] * nq[k + 1]).sum();
        prop_assert!((c.true_term - t as f64 / m).abs() < 1e-12);
        prop_assert!((c.accidental - a as f64 / m).abs() < 1e-12);
        prop_assert_eq!(c.net, c.true_term - c.accidental);
    }

    #[test]
    fn conditional_position_width_bounded_by_both_widths(
        w0 in 100e-6f64..2e-3,
        length in 1e-3f64..2e-2,
        z in 0.0f64..5.0,
    ) {
        let p = derive_params(w0, length, 355e-9).unwrap();
        let widths = beam_widths(&p, z).unwrap();
        let s = conditional_position_sigma(&p, z).unwrap().value;
        prop_assert!(s <= widths.w_z.min(widths.sigma_z) * (1.0 + 1e-12));
        prop_assert!(s >= widths.w_z.min(widths.sigma_z) / 2f64.sqrt() * (1.0 - 1e-12));
    }

    #[test]
    fn oam_width_is_mirror_invariant(s0 in 0.0f64..1.0, n in 0.0f64..1.0, sigma_f in 0.3f64..2.5) {
        prop_assume!(s0 + n > 1e-3);
        let dist = conditional_oam_clean(&OamNoiseModel::delta_gaussian(s0, n, sigma_f), 15).unwrap();
        let a = oam_uncertainty(&dist).value;
        let b = oam_uncertainty(&dist.mirrored()).value;
        prop_assert!((a - b).abs() < 1e-12);
    }
}
