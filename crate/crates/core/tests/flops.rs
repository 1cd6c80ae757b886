use actorseg::config::ExperimentConfig;
use actorseg::data::vocabulary;
use actorseg::flops::{count, measure, DEFAULT_QUERY_WORDS};
use actorseg::visual::FeatureKind;

const COORD_CHANNELS: u64 = 8;

fn macs(report: &actorseg::flops::FlopsReport, name: &str) -> u64 {
    report
        .components
        .iter()
        .find(|c| c.name == name)
        .unwrap_or_else(|| panic!("no component {name}"))
        .macs
}

#[test]
fn default_config_matches_the_measured_tally() {
    let cfg = ExperimentConfig::default();
    let mc = cfg.model_config(vocabulary().len()).unwrap();
    let report = count(&mc, DEFAULT_QUERY_WORDS);
    let measured = measure(&mc, DEFAULT_QUERY_WORDS, 0).unwrap();
    assert_eq!(report.by_op(), measured.forward.by_op);
    assert_eq!(report.total(), measured.forward.total());
    assert_eq!(report.branch_total(FeatureKind::Spatial), measured.spatial_branch.unwrap().total());
    let share = report.spatial_branch_percent();
    assert!(share > 0.0 && share < 100.0);
    assert!(report.to_text().contains("spatial_branch_percent="));
}

#[test]
fn encoder_convs_follow_shape_arithmetic() {
    let cfg = ExperimentConfig::default();
    let mc = cfg.model_config(vocabulary().len()).unwrap();
    let report = count(&mc, DEFAULT_QUERY_WORDS);
    let t = cfg.frames as u64;
    let mut c_in = 3;
    for (k, &c) in cfg.ladder.iter().enumerate() {
        let c = c as u64;
        // stage 1 keeps the input size; every later stage halves it
        let side = (cfg.height >> k) as u64;
        let area = side * side;
        let first = area * 9 * (c_in + COORD_CHANNELS) * c;
        let second = area * 9 * c * c;
        let stage = k + 1;
        assert_eq!(macs(&report, &format!("spatial.encoder.stage{stage}.conv1")), first);
        assert_eq!(macs(&report, &format!("spatial.encoder.stage{stage}.conv2")), second);
        assert_eq!(macs(&report, &format!("temporal.encoder.stage{stage}.conv1")), 3 * t * first);
        assert_eq!(macs(&report, &format!("temporal.encoder.stage{stage}.conv2")), 3 * t * second);
        c_in = c;
    }
}

#[test]
fn gru_cost_is_three_gates_per_word() {
    let cfg = ExperimentConfig::default();
    let mc = cfg.model_config(vocabulary().len()).unwrap();
    let report = count(&mc, DEFAULT_QUERY_WORDS);
    let (e, h, n) = (cfg.embed_dim as u64, cfg.c_l as u64, DEFAULT_QUERY_WORDS as u64);
    assert_eq!(macs(&report, "spatial.text.gru"), n * 3 * h * (e + h));
    assert_eq!(macs(&report, "temporal.text.gru"), n * 3 * h * (e + h));
}
