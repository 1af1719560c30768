//! Naive row-at-a-time references for every transform, and an exhaustive
//! search for nice bin steps.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use proptest::prelude::*;
use serde_json::{json, Value as Json};
use specfission::expr::SignalValues;
use specfission::table::{Column, Table};
use specfission::transform::{nice_bin_params, Transform};
use specfission::Value;

const RTOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Row {
    g: Option<&'static str>,
    k: Option<i64>,
    v: Option<f64>,
    w: Option<i64>,
    t: Option<i64>,
}

pub fn row() -> impl Strategy<Value = Row> {
    let g = prop_oneof![Just(Some("x")), Just(Some("y")), Just(Some("z")), Just(None)];
    let k = prop_oneof![4 => (-4i64..5).prop_map(Some), 1 => Just(None)];
    let v = prop_oneof![
        8 => (-200i32..200).prop_map(|q| Some(q as f64 / 4.0)),
        1 => Just(None),
        1 => Just(Some(f64::NAN)),
    ];
    let w = prop_oneof![6 => (-100i64..100).prop_map(Some), 1 => Just(None)];
    // 1930 to 2060, in milliseconds
    let t = prop_oneof![
        6 => (-1_262_304_000_000i64..2_840_140_800_000).prop_map(Some),
        1 => Just(None),
    ];
    (g, k, v, w, t).prop_map(|(g, k, v, w, t)| Row { g, k, v, w, t })
}

pub fn rows() -> impl Strategy<Value = Vec<Row>> {
    proptest::collection::vec(row(), 0..=200)
}

fn table(rows: &[Row]) -> Table {
    Table::new(vec![
        ("g".into(), Column::Str(rows.iter().map(|r| r.g.map(str::to_string)).collect())),
        ("k".into(), Column::Int(rows.iter().map(|r| r.k).collect())),
        ("v".into(), Column::Float(rows.iter().map(|r| r.v).collect())),
        ("w".into(), Column::Int(rows.iter().map(|r| r.w).collect())),
        ("t".into(), Column::Timestamp(rows.iter().map(|r| r.t).collect())),
    ])
    .unwrap()
}

fn run(op: &str, params: Json, input: &Table, signals: &mut SignalValues) -> Table {
    let Json::Object(map) = params else { panic!("params are an object") };
    Transform::parse_params(op, &map).unwrap().apply(input, signals).unwrap()
}

fn run_plain(op: &str, params: Json, input: &Table) -> Table {
    run(op, params, input, &mut SignalValues::new())
}

fn cells(t: &Table, name: &str) -> Vec<Value> {
    let col = t.column(name).unwrap_or_else(|| panic!("missing column {name}"));
    (0..t.nrows()).map(|r| col.get(r)).collect()
}

fn close(a: &Value, b: &Value) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) if !matches!((a, b), (Value::Int(_), Value::Int(_))) => {
            (x.is_nan() && y.is_nan()) || x == y || (x - y).abs() <= RTOL * x.abs().max(y.abs())
        }
        _ => a == b,
    }
}

fn assert_column(t: &Table, name: &str, want: &[Value]) -> Result<(), TestCaseError> {
    let got = cells(t, name);
    prop_assert_eq!(got.len(), want.len(), "column {} length", name);
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        prop_assert!(close(g, w), "column {} row {}: got {:?}, want {:?}", name, i, g, w);
    }
    Ok(())
}

fn opt_i(v: Option<i64>) -> Value {
    v.map_or(Value::Null, Value::Int)
}

fn opt_f(v: Option<f64>) -> Value {
    v.map_or(Value::Null, Value::Float)
}

/// Sort key order used by collect, window and stack: nulls first, NaN last.
fn cmp_f(a: Option<f64>, b: Option<f64>) -> Ordering {
    let fold = |x: f64| if x == 0.0 { 0.0 } else { x };
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, _) => Ordering::Less,
        (_, None) => Ordering::Greater,
        (Some(x), Some(y)) => match (x.is_nan(), y.is_nan()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Greater,
            (false, true) => Ordering::Less,
            _ => fold(x).partial_cmp(&fold(y)).unwrap(),
        },
    }
}

// ---- naive aggregates over a list of rows ----

fn agg(op: &str, rows: &[&Row]) -> Value {
    let vs: Vec<f64> = rows.iter().filter_map(|r| r.v).collect();
    let ws: Vec<i64> = rows.iter().filter_map(|r| r.w).collect();
    match op {
        "count" => Value::Int(rows.len() as i64),
        "valid_v" => Value::Int(vs.len() as i64),
        "sum_w" if ws.is_empty() => Value::Null,
        "sum_w" => Value::Int(ws.iter().sum()),
        "sum_v" | "mean_v" if vs.is_empty() => Value::Null,
        "sum_v" => Value::Float(vs.iter().sum()),
        "mean_v" => Value::Float(vs.iter().sum::<f64>() / vs.len() as f64),
        "min_v" | "max_v" => {
            let clean: Vec<f64> = vs.iter().copied().filter(|x| !x.is_nan()).collect();
            let pick = clean.iter().copied().reduce(|a, b| if op == "min_v" { a.min(b) } else { a.max(b) });
            opt_f(pick)
        }
        "max_w" => opt_i(ws.iter().copied().max()),
        "variance_v" | "stdev_v" => {
            if vs.len() < 2 {
                return Value::Null;
            }
            let n = vs.len() as f64;
            let mean = vs.iter().sum::<f64>() / n;
            let var = vs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Value::Float(if op == "stdev_v" { var.sqrt() } else { var })
        }
        "median_v" => {
            let mut clean: Vec<f64> = vs.iter().copied().filter(|x| !x.is_nan()).collect();
            if clean.is_empty() {
                return Value::Null;
            }
            clean.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = clean.len();
            Value::Float(if n % 2 == 1 { clean[n / 2] } else { (clean[n / 2 - 1] + clean[n / 2]) / 2.0 })
        }
        _ => unreachable!("{op}"),
    }
}

const AGG_NAMES: [&str; 10] = [
    "count", "valid_v", "sum_w", "sum_v", "mean_v", "min_v", "max_v", "max_w", "variance_v", "stdev_v",
];

fn agg_params(groupby: &[&str]) -> Json {
    let mut names: Vec<&str> = AGG_NAMES.to_vec();
    names.push("median_v");
    let (ops, fields): (Vec<Json>, Vec<Json>) = names
        .iter()
        .map(|n| match n.split_once('_') {
            None => (json!(n), Json::Null),
            Some((op, field)) => (json!(op), json!(field)),
        })
        .unzip();
    json!({"groupby": groupby, "ops": ops, "fields": fields, "as": names})
}

fn all_agg_names() -> Vec<&'static str> {
    let mut names = AGG_NAMES.to_vec();
    names.push("median_v");
    names
}

type Key = (Option<&'static str>, Option<i64>);

fn key_of(r: &Row, groupby: &[&str]) -> Key {
    (
        if groupby.contains(&"g") { r.g } else { None },
        if groupby.contains(&"k") { r.k } else { None },
    )
}

fn groups<'a>(rows: &'a [Row], groupby: &[&str]) -> BTreeMap<Key, Vec<&'a Row>> {
    let mut out: BTreeMap<Key, Vec<&Row>> = BTreeMap::new();
    for r in rows {
        out.entry(key_of(r, groupby)).or_default().push(r);
    }
    out
}

pub fn groupby_choice() -> impl Strategy<Value = Vec<&'static str>> {
    prop_oneof![Just(vec![]), Just(vec!["g"]), Just(vec!["k"]), Just(vec!["g", "k"])]
}

// ---- civil calendar for timeunit, independent of any date library ----

pub const DAY_MS: i64 = 86_400_000;

pub fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

pub fn civil_from_days(z: i64) -> (i64, i64, i64) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    (yoe + era * 400 + i64::from(m <= 2), m, d)
}

pub fn unit_bounds(unit: &str, ms: i64) -> (i64, i64) {
    let days = ms.div_euclid(DAY_MS);
    let (y, m, _) = civil_from_days(days);
    let at = |y, m, d| days_from_civil(y, m, d) * DAY_MS;
    match unit {
        "year" => (at(y, 1, 1), at(y + 1, 1, 1)),
        "yearmonth" => {
            let (ny, nm) = if m == 12 { (y + 1, 1) } else { (y, m + 1) };
            (at(y, m, 1), at(ny, nm, 1))
        }
        "yearmonthdate" => (days * DAY_MS, (days + 1) * DAY_MS),
        "hours" => {
            let lo = ms.div_euclid(3_600_000) * 3_600_000;
            (lo, lo + 3_600_000)
        }
        "minutes" => {
            let lo = ms.div_euclid(60_000) * 60_000;
            (lo, lo + 60_000)
        }
        "day" => {
            // 1970-01-01 was a Thursday; 2012-01-01 a Sunday
            let weekday = (days + 4).rem_euclid(7);
            let anchor = days_from_civil(2012, 1, 1) + weekday;
            (anchor * DAY_MS, (anchor + 1) * DAY_MS)
        }
        _ => unreachable!(),
    }
}

// ---- nice bins by exhaustive search ----

fn multiple(k: i64, m: i64, z: i32) -> f64 {
    let x = (k * m) as f64;
    if z >= 0 {
        x * 10f64.powi(z)
    } else {
        x / 10f64.powi(-z)
    }
}

/// Smallest `m * 10^z` with at most `maxbins` bins over the span, and the
/// extent snapped outward to its multiples.
fn reference_bins(lo: f64, hi: f64, maxbins: u32) -> (f64, f64, f64) {
    let span = hi - lo;
    let mut candidates: Vec<(i64, i32)> = (-15..=15).flat_map(|z| [1, 2, 5].map(|m| (m, z))).collect();
    candidates.sort_by(|a, b| multiple(1, a.0, a.1).partial_cmp(&multiple(1, b.0, b.1)).unwrap());
    let (m, z) = candidates
        .into_iter()
        .find(|&(m, z)| (span / multiple(1, m, z) - 1e-9).ceil() <= maxbins as f64)
        .expect("a candidate fits");
    let step = multiple(1, m, z);
    let mut a = (lo / step).floor() as i64;
    while multiple(a + 1, m, z) <= lo {
        a += 1;
    }
    while multiple(a, m, z) > lo {
        a -= 1;
    }
    let mut b = (hi / step).ceil() as i64;
    while multiple(b - 1, m, z) >= hi {
        b -= 1;
    }
    while multiple(b, m, z) < hi {
        b += 1;
    }
    (step, multiple(a, m, z), multiple(b, m, z))
}

pub fn extent_pair() -> impl Strategy<Value = (f64, f64, u32)> {
    (-1e6f64..1e6, -3i32..7, 1.0f64..10.0, 1u32..60).prop_map(|(lo, e, mant, maxbins)| {
        (lo, lo + mant * 10f64.powi(e), maxbins)
    })
}

pub fn stack_offset() -> impl Strategy<Value = &'static str> {
    prop_oneof![Just("zero"), Just("center"), Just("normalize")]
}

pub fn time_unit() -> impl Strategy<Value = &'static str> {
    prop_oneof![Just("year"), Just("yearmonth"), Just("yearmonthdate"), Just("hours"), Just("minutes"), Just("day")]
}

pub fn filter_matches_reference(rows: Vec<Row>, lim: i64) -> Result<(), TestCaseError> {
    let mut signals = SignalValues::from([("lim".to_string(), Value::Int(lim))]);
    let out = run("filter", json!({"expr": "datum.v > lim || datum.g === 'x'"}), &table(&rows), &mut signals);
    let kept: Vec<&Row> = rows
        .iter()
        .filter(|r| r.v.is_some_and(|v| v > lim as f64) || r.g == Some("x"))
        .collect();
    assert_column(&out, "w", &kept.iter().map(|r| opt_i(r.w)).collect::<Vec<_>>())?;
    assert_column(&out, "v", &kept.iter().map(|r| opt_f(r.v)).collect::<Vec<_>>())?;
    Ok(())
}

pub fn formula_matches_reference(rows: Vec<Row>) -> Result<(), TestCaseError> {
    let out = run_plain("formula", json!({"expr": "datum.k * 2 + datum.w", "as": "f"}), &table(&rows));
    let want: Vec<Value> = rows
        .iter()
        .map(|r| match (r.k, r.w) {
            (Some(k), Some(w)) => Value::Int(k * 2 + w),
            _ => Value::Null,
        })
        .collect();
    assert_column(&out, "f", &want)?;
    assert_column(&out, "k", &rows.iter().map(|r| opt_i(r.k)).collect::<Vec<_>>())?;
    Ok(())
}

pub fn aggregate_matches_reference(rows: Vec<Row>, groupby: Vec<&'static str>) -> Result<(), TestCaseError> {
    let out = run_plain("aggregate", agg_params(&groupby), &table(&rows));
    let mut expected = groups(&rows, &groupby);
    if groupby.is_empty() && rows.is_empty() {
        expected.insert((None, None), Vec::new());
    }
    prop_assert_eq!(out.nrows(), expected.len());
    let mut got: BTreeMap<Key, usize> = BTreeMap::new();
    for i in 0..out.nrows() {
        let g = match out.column("g").map(|c| c.get(i)) {
            Some(Value::Str(s)) => ["x", "y", "z"].into_iter().find(|x| *x == s),
            _ => None,
        };
        let k = match out.column("k").map(|c| c.get(i)) {
            Some(Value::Int(k)) => Some(k),
            _ => None,
        };
        got.insert((g, k), i);
    }
    for (key, members) in &expected {
        let i = *got.get(key).ok_or_else(|| TestCaseError::fail(format!("group {key:?} missing")))?;
        for name in all_agg_names() {
            let (g, w) = (out.column(name).unwrap().get(i), agg(name, members));
            prop_assert!(close(&g, &w), "group {:?} {}: got {:?}, want {:?}", key, name, g, w);
        }
    }
    Ok(())
}

pub fn joinaggregate_matches_reference(rows: Vec<Row>, groupby: Vec<&'static str>) -> Result<(), TestCaseError> {
    let out = run_plain("joinaggregate", agg_params(&groupby), &table(&rows));
    let expected = groups(&rows, &groupby);
    for name in all_agg_names() {
        let want: Vec<Value> = rows.iter().map(|r| agg(name, &expected[&key_of(r, &groupby)])).collect();
        assert_column(&out, name, &want)?;
    }
    assert_column(&out, "w", &rows.iter().map(|r| opt_i(r.w)).collect::<Vec<_>>())?;
    Ok(())
}

pub fn collect_matches_reference(rows: Vec<Row>, k_desc: bool) -> Result<(), TestCaseError> {
    let order = if k_desc { "descending" } else { "ascending" };
    let out = run_plain("collect", json!({"sort": {"field": ["k", "v"], "order": [order, "ascending"]}}), &table(&rows));
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    // insertion sort, stable by construction
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 {
            let (a, b) = (&rows[idx[j - 1]], &rows[idx[j]]);
            let by_k = if k_desc { b.k.cmp(&a.k) } else { a.k.cmp(&b.k) };
            if by_k.then(cmp_f(a.v, b.v)) == Ordering::Greater {
                idx.swap(j - 1, j);
                j -= 1;
            } else {
                break;
            }
        }
    }
    assert_column(&out, "w", &idx.iter().map(|&i| opt_i(rows[i].w)).collect::<Vec<_>>())?;
    assert_column(&out, "t", &idx.iter().map(|&i| rows[i].t.map_or(Value::Null, Value::Timestamp)).collect::<Vec<_>>())?;
    Ok(())
}

pub fn window_matches_reference(rows: Vec<Row>, k_desc: bool) -> Result<(), TestCaseError> {
    let order = if k_desc { "descending" } else { "ascending" };
    let names = ["rn", "rank", "dense", "sum_w", "mean_v", "min_v", "max_w"];
    let out = run_plain(
        "window",
        json!({
            "groupby": ["g"],
            "sort": {"field": "k", "order": order},
            "ops": ["row_number", "rank", "dense_rank", "sum", "mean", "min", "max"],
            "fields": [null, null, null, "w", "v", "v", "w"],
            "as": names,
        }),
        &table(&rows),
    );
    let before = |a: &Row, b: &Row| if k_desc { b.k.cmp(&a.k) } else { a.k.cmp(&b.k) };
    for name in names {
        let mut want = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            let part: Vec<usize> = (0..rows.len()).filter(|&j| rows[j].g == r.g).collect();
            // frame: rows sorting strictly before, plus earlier peers in input order
            let frame: Vec<&Row> = part
                .iter()
                .filter(|&&j| match before(&rows[j], r) {
                    Ordering::Less => true,
                    Ordering::Equal => j <= i,
                    Ordering::Greater => false,
                })
                .map(|&j| &rows[j])
                .collect();
            let smaller: Vec<Option<i64>> = part
                .iter()
                .filter(|&&j| before(&rows[j], r) == Ordering::Less)
                .map(|&j| rows[j].k)
                .collect();
            let mut distinct = smaller.clone();
            distinct.sort();
            distinct.dedup();
            want.push(match name {
                "rn" => Value::Int(frame.len() as i64),
                "rank" => Value::Int(smaller.len() as i64 + 1),
                "dense" => Value::Int(distinct.len() as i64 + 1),
                "max_w" => opt_i(frame.iter().filter_map(|r| r.w).max()),
                other => agg(other, &frame),
            });
        }
        assert_column(&out, name, &want)?;
    }
    Ok(())
}

pub fn extent_matches_reference(rows: Vec<Row>) -> Result<(), TestCaseError> {
    let mut signals = SignalValues::new();
    let t = table(&rows);
    run("extent", json!({"field": "v", "signal": "ev"}), &t, &mut signals);
    run("extent", json!({"field": "w", "signal": "ew"}), &t, &mut signals);
    let clean: Vec<f64> = rows.iter().filter_map(|r| r.v).filter(|x| !x.is_nan()).collect();
    let want_v = Value::List(vec![
        opt_f(clean.iter().copied().reduce(f64::min)),
        opt_f(clean.iter().copied().reduce(f64::max)),
    ]);
    let want_w = Value::List(vec![
        opt_i(rows.iter().filter_map(|r| r.w).min()),
        opt_i(rows.iter().filter_map(|r| r.w).max()),
    ]);
    prop_assert_eq!(&signals["ev"], &want_v);
    prop_assert_eq!(&signals["ew"], &want_w);
    Ok(())
}

pub fn stack_matches_reference(rows: Vec<Row>, offset: &'static str) -> Result<(), TestCaseError> {
    let out = run_plain(
        "stack",
        json!({"field": "w", "groupby": ["g"], "sort": {"field": "k"}, "offset": offset}),
        &table(&rows),
    );
    let val = |r: &Row| r.w.unwrap_or(0) as f64;
    let total = |g: Option<&str>| rows.iter().filter(|r| r.g == g).map(|r| val(r).abs()).sum::<f64>();
    let max_total = rows.iter().map(|r| total(r.g)).fold(0.0, f64::max);
    let (mut y0, mut y1) = (Vec::new(), Vec::new());
    for (i, r) in rows.iter().enumerate() {
        let earlier: Vec<&Row> = (0..rows.len())
            .filter(|&j| rows[j].g == r.g && (rows[j].k.cmp(&r.k) == Ordering::Less || (rows[j].k == r.k && j < i)))
            .map(|j| &rows[j])
            .collect();
        let (lo, width) = match offset {
            "zero" => {
                let below: f64 = earlier.iter().map(|e| val(e)).filter(|x| (*x < 0.0) == (val(r) < 0.0)).sum();
                (below, val(r))
            }
            "center" => {
                let below: f64 = earlier.iter().map(|e| val(e).abs()).sum();
                ((max_total - total(r.g)) / 2.0 + below, val(r).abs())
            }
            _ => {
                let t = total(r.g);
                let scale = if t > 0.0 { 1.0 / t } else { 0.0 };
                (earlier.iter().map(|e| val(e).abs() * scale).sum(), val(r).abs() * scale)
            }
        };
        y0.push(Value::Float(lo));
        y1.push(Value::Float(lo + width));
    }
    assert_column(&out, "y0", &y0)?;
    assert_column(&out, "y1", &y1)?;
    Ok(())
}

pub fn bin_matches_reference(rows: Vec<Row>, lo: i64, width: i64, maxbins: u32) -> Result<(), TestCaseError> {
    let hi = lo + width;
    let out = run_plain(
        "bin",
        json!({"field": "v", "extent": [lo, hi], "maxbins": maxbins, "as": ["b0", "b1"]}),
        &table(&rows),
    );
    let (step, start, stop) = reference_bins(lo as f64, hi as f64, maxbins);
    let nbins = ((stop - start) / step).round() as i64;
    let (mut b0, mut b1) = (Vec::new(), Vec::new());
    for r in &rows {
        match r.v.filter(|v| !v.is_nan() && *v >= start && *v <= stop) {
            None => {
                b0.push(Value::Null);
                b1.push(Value::Null);
            }
            Some(v) => {
                let mut j = 0;
                while j + 1 < nbins && start + (j + 1) as f64 * step <= v {
                    j += 1;
                }
                let edge = start + j as f64 * step;
                b0.push(Value::Float(edge));
                b1.push(Value::Float(edge + step));
            }
        }
    }
    assert_column(&out, "b0", &b0)?;
    assert_column(&out, "b1", &b1)?;
    Ok(())
}

pub fn timeunit_matches_reference(rows: Vec<Row>, unit: &'static str) -> Result<(), TestCaseError> {
    let out = run_plain("timeunit", json!({"field": "t", "units": [unit]}), &table(&rows));
    let (mut u0, mut u1) = (Vec::new(), Vec::new());
    for r in &rows {
        match r.t.map(|t| unit_bounds(unit, t)) {
            Some((a, b)) => {
                u0.push(Value::Timestamp(a));
                u1.push(Value::Timestamp(b));
            }
            None => {
                u0.push(Value::Null);
                u1.push(Value::Null);
            }
        }
    }
    assert_column(&out, "unit0", &u0)?;
    assert_column(&out, "unit1", &u1)?;
    Ok(())
}

pub fn nice_bins_match_exhaustive_search((lo, hi, maxbins): (f64, f64, u32)) -> Result<(), TestCaseError> {
    let p = nice_bin_params(lo, hi, maxbins).unwrap();
    let (step, start, stop) = reference_bins(lo, hi, maxbins);
    prop_assert!((p.step - step).abs() <= 1e-12 * step, "step {} vs {}", p.step, step);
    prop_assert!((p.start - start).abs() <= 1e-9 * step, "start {} vs {}", p.start, start);
    prop_assert!((p.stop - stop).abs() <= 1e-9 * step, "stop {} vs {}", p.stop, stop);
    prop_assert!(p.start <= lo && p.stop >= hi);
    prop_assert!(lo - p.start < step && p.stop - hi < step);
    Ok(())
}
