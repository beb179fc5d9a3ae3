use std::path::Path;

use proptest::prelude::*;
use shrinkmeta::{
    parse_csv, parse_dataset, parse_json, render_forest, run_analysis, AnalysisConfig, AnalysisReport,
    ForestFormat, IntervalMethod, IntervalSpec, ParseOptions,
};

fn load(name: &str) -> shrinkmeta::Dataset {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name);
    parse_dataset(&path, &ParseOptions::default()).unwrap()
}

fn close(what: &str, got: f64, want: f64, tol: f64) {
    assert!((got - want).abs() <= tol, "{what}: {got} vs {want} +/- {tol}");
}

#[test]
fn ventilation_dataset_summaries() {
    let data = load("mechanical_ventilation.csv");
    let r = run_analysis(&data, &AnalysisConfig::default()).unwrap();
    close("tau median", r.tau.summary.median, 0.920, 0.08);
    close("mu mean", r.mu.mean, 2.215, 0.02);
    close("mu lower", r.mu.interval.lower, 1.799, 0.03);
    close("mu upper", r.mu.interval.upper, 2.630, 0.03);
    let t = r.target.as_ref().unwrap();
    let row = &r.shrinkage[t.index];
    close("target shrinkage", row.mean, 3.271, 0.03);
    close("target lower", row.interval.lower, 2.529, 0.05);
    close("target upper", row.interval.upper, 4.017, 0.05);
    assert!(t.plug_in.total > t.plug_in.direct);
    // The prediction interval is wider than the interval for mu.
    assert!(
        r.prediction.interval.upper - r.prediction.interval.lower > r.mu.interval.upper - r.mu.interval.lower
    );
}

#[test]
fn report_shortest_never_wider_than_central() {
    let data = load("obesity.csv");
    let cfg = AnalysisConfig {
        interval: IntervalSpec {
            level: 0.9,
            method: IntervalMethod::Central,
        },
        ..Default::default()
    };
    let central = run_analysis(&data, &cfg).unwrap();
    let shortest = run_analysis(
        &data,
        &AnalysisConfig {
            interval: IntervalSpec::new(0.9, IntervalMethod::Shortest).unwrap(),
            ..cfg
        },
    )
    .unwrap();
    for (c, s) in central.shrinkage.iter().zip(&shortest.shrinkage) {
        assert!(s.interval.upper - s.interval.lower <= c.interval.upper - c.interval.lower);
        assert_eq!(c.mean, s.mean);
    }
}

#[test]
fn csv_and_json_inputs_agree() {
    let csv = "label,y,se,estimate,ci_lower,ci_upper,a,b,c,d,target\n\
               one,0.5,0.2,,,,,,,,0\n\
               two,,,1.0,0.2,1.8,,,,,1\n\
               three,,,,,,5,0,3,7,0\n";
    let json = r#"[
        {"label": "one", "y": 0.5, "se": 0.2},
        {"label": "two", "estimate": 1.0, "ci_lower": 0.2, "ci_upper": 1.8, "target": 1},
        {"label": "three", "a": 5, "b": 0, "c": 3, "d": 7}
    ]"#;
    let opts = ParseOptions::default();
    let a = parse_csv(csv.as_bytes(), &opts).unwrap();
    let b = parse_json(json, &opts).unwrap();
    assert_eq!(a, b);
    let s = a.studies();
    close("2x2 y", s[2].y, (5.5f64 * 7.5 / (0.5 * 3.5)).ln(), 1e-12);
    close(
        "2x2 sigma",
        s[2].sigma,
        (1.0 / 5.5 + 1.0 / 0.5 + 1.0 / 3.5 + 1.0 / 7.5f64).sqrt(),
        1e-12,
    );
    assert_eq!(a.target_index(), Some(1));
}

#[test]
fn report_survives_a_json_round_trip() {
    let data = load("smoking.csv");
    let r = run_analysis(&data, &AnalysisConfig::default()).unwrap();
    let back: AnalysisReport = serde_json::from_str(&r.to_json()).unwrap();
    let again = run_analysis(&back.dataset().unwrap(), &back.config).unwrap();
    assert_eq!(again.to_json(), r.to_json());
}

#[test]
fn forest_rows_match_the_report() {
    let data = load("vasopressors.csv");
    let r = run_analysis(&data, &AnalysisConfig::default()).unwrap();
    let svg = render_forest(&r, ForestFormat::Svg);
    let k = data.len();
    assert_eq!(svg.matches("<g class=\"row ").count(), 2 * k + 2);
    assert_eq!(svg.matches("shrinkage target").count(), 1);
    assert!(!svg.contains("href") && !svg.contains("url("));
    let text = render_forest(&r, ForestFormat::Text);
    for row in &r.shrinkage {
        assert!(text.contains(&shrinkmeta::forest::fmt_estimate(
            row.mean,
            row.interval.lower,
            row.interval.upper
        )));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parsing_preserves_row_order(rows in proptest::collection::vec((-3.0..3.0f64, 0.05..2.0f64), 1..20)) {
        let mut csv = String::from("label,y,se\n");
        for (j, (y, s)) in rows.iter().enumerate() {
            csv.push_str(&format!("r{j},{y},{s}\n"));
        }
        let d = parse_csv(csv.as_bytes(), &ParseOptions::default()).unwrap();
        prop_assert_eq!(d.len(), rows.len());
        for (j, (st, (y, s))) in d.studies().iter().zip(&rows).enumerate() {
            prop_assert_eq!(&st.label, &format!("r{j}"));
            prop_assert_eq!(st.y, *y);
            prop_assert_eq!(st.sigma, *s);
        }
        prop_assert_eq!(parse_csv(csv.as_bytes(), &ParseOptions::default()).unwrap(), d);
    }
}
