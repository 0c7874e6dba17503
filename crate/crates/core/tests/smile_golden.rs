use std::fs;
use std::path::PathBuf;

use bachelier::smile::{build_smile, emit_smile, ingest_quotes, parse_smile, SmileStatus};
use bachelier::Execution;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

#[test]
fn three_record_fixture_matches_golden_bytes() {
    let quotes = ingest_quotes(fs::File::open(data("quotes_fixture.csv")).unwrap(), 0.0).unwrap();
    assert_eq!(quotes.records.len(), 3);
    assert!(quotes.errors.is_empty());
    let mut out = Vec::new();
    emit_smile(&build_smile(&quotes.records), &mut out).unwrap();
    let golden = fs::read(data("smile_golden.csv")).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), String::from_utf8(golden).unwrap());
}

#[test]
fn golden_values_agree_with_reference_inversion() {
    // implied vols of the fixture quotes from an independent 40-digit solver
    let rows = parse_smile(fs::File::open(data("smile_golden.csv")).unwrap()).unwrap();
    let close = |x: Option<f64>, y: f64| (x.unwrap() / y - 1.0).abs() < 1e-12;

    assert_eq!(rows[0].status, SmileStatus::Ok);
    assert!(close(rows[0].bs_vol, 0.161_336_481_547_838_92));
    assert!(close(rows[0].bachelier_vol_abs, 15.722_595_935_531_754));
    assert_eq!(rows[0].atm_gap_bound, None);

    assert_eq!(rows[1].status, SmileStatus::Ok);
    assert!(close(rows[1].bs_vol, 0.199_553_886_240_914_4));
    assert!(close(rows[1].bachelier_vol_rel, 0.199_471_140_200_716_33));
    assert!(close(rows[1].atm_gap_bound, 1.655_538_681_378_524_4e-4));
    let gap = rows[1].bs_vol.unwrap() - rows[1].bachelier_vol_rel.unwrap();
    assert!(gap >= 0.0 && gap <= rows[1].atm_gap_bound.unwrap());

    assert_eq!(rows[2].status, SmileStatus::AboveUpperBound);
    assert_eq!(rows[2].bs_vol, None);
}

#[test]
fn sequential_and_parallel_smiles_are_identical() {
    let quotes = ingest_quotes(fs::File::open(data("quotes_fixture.csv")).unwrap(), 0.0).unwrap();
    let mut records = quotes.records.clone();
    for i in 0..200 {
        let mut q = quotes.records[i % 3].clone();
        q.quote_id = format!("r{i}");
        q.strike += (i / 3) as f64 * 0.25;
        records.push(q);
    }
    let mut seq = Vec::new();
    let mut par = Vec::new();
    emit_smile(&bachelier::smile::build_smile_with(Execution::Sequential, &records), &mut seq).unwrap();
    emit_smile(&bachelier::smile::build_smile_with(Execution::Parallel, &records), &mut par).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn volume_filter_is_a_pure_predicate() {
    let src = fs::read_to_string(data("quotes_fixture.csv")).unwrap();
    for (threshold, kept) in [(0.0, 3), (15.0, 3), (15.5, 2), (80.0, 2), (100.0, 1), (121.0, 0)] {
        let r = ingest_quotes(src.as_bytes(), threshold).unwrap();
        assert_eq!(r.records.len(), kept, "threshold {threshold}");
        assert_eq!(r.below_min_volume, 3 - kept);
        assert!(r.records.iter().all(|q| q.volume >= threshold));
    }
}
