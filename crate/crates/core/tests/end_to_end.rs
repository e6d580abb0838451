use etld::eval::evaluate;
use etld::event_io::{synthesize_sequence, SynthConfig};
use etld::pipeline::run;
use etld::{EtldConfig, Mode};

fn config() -> EtldConfig {
    EtldConfig {
        codebook_size: 128,
        ..EtldConfig::default()
    }
}

#[test]
fn follows_the_translating_object() {
    let synth = SynthConfig::translation_fixture();
    let (events, ann) = synthesize_sequence(&synth, 3_000_000).unwrap();
    let out = run(&events, synth.object_roi(0), &config()).unwrap();
    let rep = evaluate(&out.track, &ann, 0.5).unwrap();
    assert!(rep.os >= 0.8, "os {}", rep.os);
    assert!(rep.cle.unwrap() <= 3.0, "cle {:?}", rep.cle);
    assert!(out.training.roi_score > 0.0 && out.training.background_score < 0.0);
    assert!(out.track.windows(2).all(|w| w[0].t <= w[1].t));
}

#[test]
fn recovers_after_occlusion() {
    let mut synth = SynthConfig::translation_fixture();
    synth.occlusions = vec![(1_200_000, 2_000_000)];
    let (events, _) = synthesize_sequence(&synth, 3_500_000).unwrap();
    let out = run(&events, synth.object_roi(0), &config()).unwrap();
    let trace: Vec<String> = out.transitions.iter().map(|t| t.label()).collect();
    assert!(trace.len() >= 2, "{trace:?}");
    assert_eq!(trace[0], "TRACKING->LOST");
    assert_eq!(trace[1], "LOST->TRACKING");
    assert_eq!(out.state.mode(), Mode::Tracking);
    let back = out.transitions[1].t;
    let row = out.track.iter().find(|r| r.t == back).unwrap();
    let gt = synth.object_roi(back);
    assert!(etld::eval::iou(&row.roi, &gt) >= 0.5, "{} vs {gt}", row.roi);
}
