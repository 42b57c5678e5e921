//! Score CSV and report schema shared with external producers.

use std::fs;

use wisp_cli::report::{
    build_report, read_records, read_report_json, write_records, write_report, RECORD_COLUMNS,
    REPORT_COLUMNS,
};
use wisp_core::metrics::EvalRecord;
use wisp_core::scene::ShapeKind;

fn rec(id: u64, shape: ShapeKind, method: &str, iou: f64) -> EvalRecord {
    EvalRecord {
        sample_id: id,
        shape,
        method: method.into(),
        iou,
        pixel_accuracy: 0.5 + iou / 2.0,
    }
}

#[test]
fn records_csv_round_trips_with_a_fixed_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.csv");
    let records = vec![
        rec(0, ShapeKind::Circle, "physical-60", 0.25),
        rec(0, ShapeKind::Circle, "physical-256", 1.0 / 3.0),
        rec(7, ShapeKind::Ring, "wifigen", 0.0),
    ];
    write_records(&path, &records).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), RECORD_COLUMNS.join(","));
    assert_eq!(text.lines().nth(3).unwrap(), "7,ring,wifigen,0.0,0.5");
    assert_eq!(read_records(&path).unwrap(), records);
}

#[test]
fn external_producer_rows_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wifigen.csv");
    fs::write(
        &path,
        "sample_id,shape,method,iou,pixel_accuracy\n3,square,wifigen,0.91,0.99\n4,triangle,wifigen,0.5,0.9\n",
    )
    .unwrap();
    let r = read_records(&path).unwrap();
    assert_eq!(
        r[0],
        EvalRecord {
            sample_id: 3,
            shape: ShapeKind::Square,
            method: "wifigen".into(),
            iou: 0.91,
            pixel_accuracy: 0.99,
        }
    );
}

#[test]
fn malformed_records_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        "id,shape,method,iou,pixel_accuracy\n0,ring,x,0.5,0.5\n",
        "sample_id,shape,method,iou,pixel_accuracy\n0,hexagon,x,0.5,0.5\n",
        "sample_id,shape,method,iou,pixel_accuracy\n0,ring,x,1.5,0.5\n",
        "sample_id,shape,method,iou,pixel_accuracy\n0,ring,a b,0.5,0.5\n",
    ];
    for (i, text) in cases.iter().enumerate() {
        let path = dir.path().join(format!("bad{i}.csv"));
        fs::write(&path, text).unwrap();
        assert!(read_records(&path).is_err(), "{text}");
    }
}

#[test]
fn report_has_an_all_row_then_one_row_per_family() {
    let dir = tempfile::tempdir().unwrap();
    let records = vec![
        rec(0, ShapeKind::Circle, "physical-60", 0.2),
        rec(1, ShapeKind::Circle, "physical-60", 0.4),
        rec(2, ShapeKind::Ring, "physical-60", 0.9),
        rec(2, ShapeKind::Ring, "wifigen", 1.0),
    ];
    let table = build_report(&records).unwrap();
    write_report(dir.path(), &table).unwrap();
    let text = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], REPORT_COLUMNS.join(","));
    let rows: Vec<Vec<&str>> = lines[1..].iter().map(|l| l.split(',').collect()).collect();
    let keys: Vec<(&str, &str, &str)> = rows.iter().map(|r| (r[0], r[1], r[2])).collect();
    assert_eq!(
        keys,
        vec![
            ("physical-60", "all", "3"),
            ("physical-60", "circle", "2"),
            ("physical-60", "ring", "1"),
            ("wifigen", "all", "1"),
            ("wifigen", "ring", "1"),
        ]
    );
    let all: f64 = rows[0][3].parse().unwrap();
    assert!((all - 0.5).abs() < 1e-12);
    let circle: f64 = rows[1][3].parse().unwrap();
    assert!((circle - 0.3).abs() < 1e-12);
    assert_eq!(
        read_report_json(&dir.path().join("report.json")).unwrap(),
        table
    );
}

#[test]
fn empty_record_set_has_no_report() {
    assert!(build_report(&[]).is_err());
}
