use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use accessband::ingest::{self, AccessRecord, UserSeries};
use accessband::pipeline::{self, ReportRow};
use accessband::policy;
use accessband::store::{Store, StoreConfig, StoreError};
use accessband::{syngen, BandConfig, FitConfig, Granularity, InputFormat, ScenarioConfig, Thresholds};
use chrono::{Days, NaiveDate};

use crate::{FitArgs, ForecastArgs, Format, IngestArgs, ReportArgs, Selection, SimulateArgs};

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Self { code: 2, message: message.to_string() }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let code = if matches!(e, StoreError::NotFound(_)) { 4 } else { 2 };
        Self { code, message: e.to_string() }
    }
}

type Outcome = Result<(), Failure>;

fn write_file(path: &Path, bytes: &[u8]) -> Outcome {
    fs::write(path, bytes).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

pub fn ingest(a: IngestArgs) -> Outcome {
    let bytes = fs::read(&a.input).map_err(|e| Failure::usage(format!("{}: {e}", a.input.display())))?;
    let format = match a.format {
        Format::Csv => InputFormat::Csv,
        Format::Jsonl => InputFormat::Jsonl,
    };
    let parsed = ingest::parse_records(&bytes, format);
    for r in &parsed.rejected {
        eprintln!("warning: {}: {r}", a.input.display());
    }
    let store = Store::open(&a.store)?;
    let _lock = store.lock()?;
    store.append_records(&parsed.records)?;
    println!("accepted={} rejected={}", parsed.records.len(), parsed.rejected.len());
    Ok(())
}

/// Stored records, failing on rows that no longer parse.
fn store_records(store: &Store) -> Result<Vec<AccessRecord>, Failure> {
    let parsed = store.read_records()?;
    if let Some(bad) = parsed.rejected.first() {
        return Err(Failure::usage(format!("{}: {bad}", store.records_path().display())));
    }
    Ok(parsed.records)
}

/// Training series per user on the store-wide period axis, each starting at
/// the user's first active period.
fn training_series(
    records: &[AccessRecord],
    granularity: Granularity,
    until: Option<NaiveDate>,
) -> Result<BTreeMap<String, UserSeries>, Failure> {
    let Some(start) = records.iter().map(|r| r.date).min() else {
        return Ok(BTreeMap::new());
    };
    let end = until.unwrap_or_else(|| records.iter().map(|r| r.date).max().unwrap_or(start));
    if end < start {
        return Ok(BTreeMap::new());
    }
    let mut first: BTreeMap<&str, NaiveDate> = BTreeMap::new();
    for r in records.iter().filter(|r| r.date <= end) {
        let e = first.entry(&r.user_id).or_insert(r.date);
        *e = (*e).min(r.date);
    }
    let mut all = ingest::aggregate(records, granularity, Some((start, end))).map_err(Failure::usage)?;
    for series in all.values_mut() {
        let skip = granularity.index(series.origin, first[series.user_id.as_str()]) as usize;
        series.origin = granularity.start_of(series.origin, skip as i64);
        series.values.drain(..skip);
    }
    Ok(all)
}

fn selected<'a>(select: &'a Selection, all: impl IntoIterator<Item = &'a String>) -> Vec<String> {
    match &select.user {
        Some(u) => vec![u.clone()],
        None => all.into_iter().cloned().collect(),
    }
}

pub fn fit(a: FitArgs) -> Outcome {
    Store::open_existing(&a.store)?;
    let store = Store::open(&a.store)?;
    let _lock = store.lock()?;
    let cfg = store.load_config()?;
    let defaults = FitConfig::default();
    let fit = FitConfig {
        n_changepoints: a.changepoints.or(cfg.changepoints).unwrap_or(defaults.n_changepoints),
        cp_range: a.cp_range.or(cfg.cp_range).unwrap_or(defaults.cp_range),
        lambda: a.lambda.or(cfg.lambda).unwrap_or(defaults.lambda),
    };
    let band_defaults = BandConfig::default();
    let band = BandConfig {
        alpha: a.alpha.or(cfg.alpha).unwrap_or(band_defaults.alpha),
        varsigma: a.varsigma.or(cfg.varsigma).unwrap_or(band_defaults.varsigma),
        mode: a.band_mode.or(cfg.band_mode).unwrap_or(band_defaults.mode),
    };
    let granularity = a.granularity.or(cfg.granularity).unwrap_or(Granularity::Annual);

    let records = store_records(&store)?;
    let series = training_series(&records, granularity, a.train_until)?;
    let users = selected(&a.select, series.keys());
    let mut fitted = 0;
    for user in &users {
        let Some(s) = series.get(user) else {
            eprintln!("error: {user}: no records in the training window");
            continue;
        };
        match pipeline::fit_user(s, &fit, &band) {
            Ok((model, stats)) => {
                let stats = stats.summary();
                store.save_model(&model, &stats, &band)?;
                println!("{user} {} {} {} {}", model.k, model.m_offset, stats.mu, stats.sigma);
                fitted += 1;
            }
            Err(e) => eprintln!("error: {user}: {e}"),
        }
    }
    if fitted == 0 {
        return Err(Failure { code: 3, message: "no user could be fitted".into() });
    }
    Ok(())
}

fn thresholds(cfg: &StoreConfig) -> Result<Thresholds, Failure> {
    let t = cfg.thresholds.unwrap_or_default();
    t.validate().map_err(Failure::usage)?;
    Ok(t)
}

pub fn forecast(a: ForecastArgs) -> Outcome {
    let store = Store::open_existing(&a.store)?;
    let _lock = store.lock()?;
    let cfg = store.load_config()?;
    let horizon = a.horizon.or(cfg.horizon).unwrap_or(1);
    let thresholds = thresholds(&cfg)?;
    let records = store_records(&store)?;
    let last_record = records.iter().map(|r| r.date).max();

    let users = match &a.select.user {
        Some(u) => vec![u.clone()],
        None => store.model_users()?,
    };
    if users.is_empty() {
        return Err(Failure { code: 4, message: "no fitted models in the store".into() });
    }

    let mut rows: Vec<ReportRow> = Vec::new();
    let mut decisions = Vec::new();
    for user in &users {
        let stored = store.load_model(user)?;
        let m = &stored.model;
        let g = m.granularity;
        let train_end = g.start_of(m.origin, m.n_train as i64) - Days::new(1);
        let mine: Vec<AccessRecord> = records.iter().filter(|r| &r.user_id == user).cloned().collect();
        let end = last_record.map_or(train_end, |d| d.max(train_end));
        let mut values = ingest::aggregate(&mine, g, Some((m.origin, end)))
            .map_err(Failure::usage)?
            .remove(user)
            .map(|s| s.values)
            .unwrap_or_else(|| vec![0.0; g.span(m.origin, end)]);
        let future: Vec<Option<f64>> = (0..horizon)
            .map(|h| values.get(m.n_train + h).copied())
            .collect();
        values.truncate(m.n_train);
        let training = UserSeries {
            user_id: user.clone(),
            granularity: g,
            origin: m.origin,
            values,
        };
        let analysis = pipeline::assess(m, &stored.stats, &stored.band, &training, horizon, &future, &thresholds)
            .map_err(|e| Failure::usage(format!("{user}: {e}")))?;
        let worst = analysis.decisions.iter().map(|d| d.severity).fold(0.0, f64::max);
        println!("{user} action={} max_severity={worst}", analysis.worst_action());
        rows.extend(analysis.report_rows());
        decisions.extend(analysis.decisions);
    }

    let mut buf = Vec::new();
    pipeline::write_report(&rows, &mut buf).map_err(Failure::usage)?;
    write_file(&a.out, &buf)?;

    let mut latest = store.load_decisions()?;
    latest.retain(|d| !users.contains(&d.user_id));
    latest.extend(decisions);
    latest.sort_by(|x, y| (&x.user_id, x.period).cmp(&(&y.user_id, y.period)));
    store.save_decisions(&latest)?;
    Ok(())
}

pub fn report(a: ReportArgs) -> Outcome {
    let store = Store::open_existing(&a.store)?;
    let suspects = policy::rank_suspects(&store.load_decisions()?);
    let mut buf = b"user_id,max_severity,action\n".to_vec();
    for s in &suspects {
        writeln!(buf, "{},{},{}", csv_field(&s.user_id), s.max_severity, s.action).map_err(Failure::usage)?;
    }
    write_file(&a.out, &buf)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (rank, s) in suspects.iter().take(a.top).enumerate() {
        writeln!(out, "{:>3}. {} {} severity={}", rank + 1, s.user_id, s.action, s.max_severity)
            .map_err(Failure::usage)?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn simulate(a: SimulateArgs) -> Outcome {
    let cfg = ScenarioConfig {
        n_users: a.users,
        start: a.from,
        end: a.to,
        granularity: a.granularity,
        normal_cap: a.cap,
        leaker_id: a.leaker,
        leak_start: a.leak_start,
        leak_slope: a.leak_slope,
        noise_scale: a.noise,
        seed: a.seed,
    };
    let records = syngen::generate(&cfg).map_err(Failure::usage)?;
    let mut buf = Vec::new();
    ingest::write_csv(&records, &mut buf, true).map_err(Failure::usage)?;
    write_file(&a.out, &buf)?;
    println!("records={}", records.len());
    Ok(())
}
