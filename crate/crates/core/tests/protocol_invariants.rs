//! Cross-cutting protocol invariants: adversarial acceptance never beats the
//! brute-force soundness oracle, recovered honest values match the extension,
//! and the trial harness is deterministic and schedule-independent.

use pdqma_core::field::FieldSpec;
use pdqma_core::pcp;
use pdqma_core::protocol::{
    run_transcripts, run_trials, run_trials_seq, ProtocolMode, ProtocolParams, ProverKind, Reason,
};

fn params_for(instance_name: &str, mode: ProtocolMode) -> ProtocolParams {
    let instance = pcp::builtin(instance_name).unwrap();
    let q = pdqma_core::field::choose_field_size(instance.n(), instance.sigma_size() as u64, 1);
    let spec = FieldSpec::new(q, instance.n(), instance.sigma_size() as u64).unwrap();
    ProtocolParams::defaults(spec, mode)
}

#[test]
fn soundness_dominance_across_adversaries_and_instances() {
    // Any accepted trial implies a consistently decoded low-degree proof, so
    // measured acceptance cannot beat the best-proof oracle (plus noise).
    let kinds = [
        ProverKind::MultiValued { fraction: 1.0 },
        ProverKind::RandomFunction { seed: 3 },
        ProverKind::SkewedAmplitude { factor: 2.0 },
        ProverKind::PlantedCorruption { fraction: 0.05, seed: 8 },
    ];
    for name in ["tri16", "k4bin", "path8"] {
        let instance = pcp::builtin(name).unwrap();
        let oracle = instance.brute_force_soundness().unwrap();
        let params = params_for(name, ProtocolMode::Pdqma);
        for (i, kind) in kinds.iter().enumerate() {
            let stats = run_trials(&instance, kind, &params, 300, 100 + i as u64).unwrap();
            assert!(
                stats.acceptance <= oracle + 0.05,
                "{name} vs {kind:?}: acceptance {} above oracle {oracle}",
                stats.acceptance
            );
        }
    }
}

#[test]
fn planted_corruption_is_caught_by_interpolation() {
    let instance = pcp::tri16();
    let params = params_for("tri16", ProtocolMode::Pdqma);
    let stats = run_trials(&instance, &ProverKind::PlantedCorruption { fraction: 0.05, seed: 8 }, &params, 150, 5)
        .unwrap();
    assert!(stats.acceptance <= 0.05, "acceptance {}", stats.acceptance);
    assert_eq!(stats.dominant_reason(), Some(Reason::InterpFail), "{:?}", stats.reasons);
}

#[test]
fn honest_transcripts_expose_recovered_values() {
    // run_transcripts asserts internally that every honest recovery matches
    // the extension oracle; here we additionally check the bookkeeping.
    let instance = pcp::path8();
    let params = params_for("path8", ProtocolMode::Pdqma);
    let transcripts =
        run_transcripts(&instance, &ProverKind::Honest { assignment: None }, &params, 60, 21).unwrap();
    assert_eq!(transcripts.len(), 60);
    for (i, t) in transcripts.iter().enumerate() {
        assert_eq!(t.trial, i);
        assert_eq!(t.seed, 21);
        assert_eq!(t.verdict, t.reason == Reason::Accept);
        match t.reason {
            Reason::Accept | Reason::PcpReject => assert!(t.recovered.is_some()),
            _ => assert!(t.recovered.is_none()),
        }
        let edge = &instance.edges()[t.edge_id];
        assert_eq!((edge.u, edge.v), t.queries);
    }
}

#[test]
fn parallel_and_sequential_schedules_agree() {
    let instance = pcp::path8();
    for mode in [ProtocolMode::Pdqma, ProtocolMode::Dqma] {
        let params = params_for("path8", mode);
        let kind = ProverKind::Honest { assignment: None };
        let par = run_trials(&instance, &kind, &params, 24, 77).unwrap();
        let seq = run_trials_seq(&instance, &kind, &params, 24, 77).unwrap();
        assert_eq!(par, seq, "mode {mode:?}");
    }
}

#[test]
fn explicit_honest_assignment_is_used() {
    // A proper 3-coloring of the path via alternating symbols.
    let instance = pcp::path8();
    let assignment = (0..8u32).map(|v| (v, (v % 3) as u8)).collect();
    let params = params_for("path8", ProtocolMode::Pdqma);
    let stats =
        run_trials(&instance, &ProverKind::Honest { assignment: Some(assignment) }, &params, 100, 9).unwrap();
    // Only plane hits reject an honest satisfying witness.
    assert_eq!(stats.reason_count(Reason::Accept) + stats.reason_count(Reason::PlaneHit), 100);
}
