//! Command drivers: fit, forecast, compare, and netflow runs.
//!
//! Each driver streams records through a [`ReportWriter`] as the filter
//! advances, so memory stays bounded by the model state, not the series
//! length. All randomness (forecast ensembles, randomized count PITs)
//! derives from the run's master seed through tagged child streams, which
//! makes reports byte-identical across reruns and worker counts.

use ndarray::Array1;
use statrs::distribution::{ContinuousCDF, StudentsT};

use recouple_core::ddnm::{ForecastEnsemble, MultiSeriesFilter, StepOutcome};
use recouple_core::dglm::{
    dglm_forecast, dglm_update, gamma_match, CountForecast, DglmState, ForecastMethod,
};
use recouple_core::dlm::StudentForecast;
use recouple_core::netflow::{gravity_decompose, FlowPanel, NetworkFilter};
use recouple_core::regression::NoCovariates;
use recouple_core::rng;
use recouple_core::scoring::{pit_continuous, pit_count, ScoreLedger};
use recouple_core::sgdlm::Sgdlm;

use crate::config::{Kind, RunConfig};
use crate::data::{FlowTable, Panel};
use crate::error::{CliError, Result};
use crate::report::{Record, ReportWriter, RunMeta};

/// Child-stream tags for the run's master seed.
const TAG_PIT: u64 = 0x5049_5400; // randomized count PITs
const TAG_FORECAST: u64 = 0x464f_5245; // forecast ensembles
const TAG_RAW: u64 = 0x5241_5700; // raw count forecast draws

/// The report's quantile grid.
pub const QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Analytic quantile of a one-step Student-t forecast.
fn student_quantile(fc: &StudentForecast, p: f64) -> Result<f64> {
    let t = StudentsT::new(0.0, 1.0, fc.dof).map_err(|e| {
        CliError::Numeric(format!("Student-t quantile with dof {}: {e}", fc.dof))
    })?;
    Ok(fc.location + fc.spread.sqrt() * t.inverse_cdf(p))
}

/// Smallest count y with predictive CDF(y) ≥ p.
fn count_quantile(fc: &CountForecast, p: f64) -> f64 {
    if fc.cdf(0) >= p {
        return 0.0;
    }
    let mut lo: i64 = 0; // cdf(lo) < p
    let mut hi: i64 = (2.0 * fc.mean()).ceil().max(1.0) as i64;
    while fc.cdf(hi) < p {
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fc.cdf(mid) >= p {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi as f64
}

/// Linear-interpolation quantile of an ascending-sorted sample.
fn sample_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    }
}

fn set_quantiles(rec: &mut Record, q: &[f64; 5]) {
    rec.q05 = Some(q[0]);
    rec.q25 = Some(q[1]);
    rec.q50 = Some(q[2]);
    rec.q75 = Some(q[3]);
    rec.q95 = Some(q[4]);
}

/// Lagged predictors consume the first `burn` rows as lag-window seed data;
/// the panel must still have observations left to filter after them.
fn check_burn_in(len: usize, burn: usize) -> Result<()> {
    if len <= burn {
        return Err(CliError::data(format!(
            "panel has {len} rows but the largest lag is {burn}; the first {burn} rows only seed the lag window, so at least {} rows are needed",
            burn + 1
        )));
    }
    Ok(())
}

/// One-step record for a Gaussian series forecast.
fn gaussian_step_record(
    meta: &RunMeta,
    t: usize,
    name: &str,
    y: f64,
    fc: &StudentForecast,
    log_score: f64,
) -> Result<Record> {
    let mut rec = Record::new("step", meta);
    rec.t = Some(t);
    rec.series = Some(name.to_string());
    rec.y = Some(y);
    rec.mean = Some(fc.location);
    rec.spread = Some(fc.spread);
    rec.dof = Some(fc.dof);
    let mut qs = [0.0; 5];
    for (slot, p) in qs.iter_mut().zip(QUANTILES) {
        *slot = student_quantile(fc, p)?;
    }
    set_quantiles(&mut rec, &qs);
    rec.pit = Some(pit_continuous(fc, y));
    rec.log_score = Some(log_score);
    Ok(rec)
}

fn write_gaussian_step(
    writer: &mut ReportWriter,
    meta: &RunMeta,
    names: &[String],
    t: usize,
    y: &Array1<f64>,
    outcome: &StepOutcome,
    ess: Option<f64>,
    entropy_index: Option<f64>,
) -> Result<()> {
    for (j, name) in names.iter().enumerate() {
        let mut rec = gaussian_step_record(
            meta,
            t,
            name,
            y[j],
            &outcome.forecasts[j],
            outcome.log_predictives[j],
        )?;
        rec.ess = ess;
        rec.entropy_index = entropy_index;
        writer.write(&rec)?;
    }
    Ok(())
}

/// Filter a Gaussian panel to its end state, optionally emitting step
/// records, and return the filter for forecasting.
fn filter_ddnm(
    cfg: &RunConfig,
    panel: &Panel,
    meta: &RunMeta,
    writer: Option<&mut ReportWriter>,
) -> Result<MultiSeriesFilter> {
    let models = cfg.build_series_models()?;
    let structure = cfg.ddnm_structure()?;
    let mut filter = MultiSeriesFilter::new(models, structure)?;
    let burn = filter.max_lag();
    check_burn_in(panel.len(), burn)?;
    let names = cfg.series_names();
    let mut writer = writer;
    for t in 0..panel.len() {
        let y = panel.row(t);
        if t < burn {
            filter.seed_history(&y.view())?;
            continue;
        }
        let outcome = filter.step(&y.view(), &NoCovariates)?;
        if let Some(w) = writer.as_deref_mut() {
            write_gaussian_step(w, meta, &names, t, &y, &outcome, None, None)?;
        }
    }
    Ok(filter)
}

/// Filter an sgdlm panel, optionally emitting step records. A step whose
/// importance weights collapse below the ESS floor aborts the run: batch
/// output after a skipped recoupling would silently change meaning.
fn filter_sgdlm(
    cfg: &RunConfig,
    panel: &Panel,
    meta: &RunMeta,
    writer: Option<&mut ReportWriter>,
) -> Result<Sgdlm> {
    let models = cfg.build_series_models()?;
    let parents = cfg.parent_indices()?;
    let discounts = cfg.block_discounts();
    let sg_cfg = cfg.sgdlm_config();
    let ess_floor = sg_cfg.ess_floor * sg_cfg.i_samples as f64;
    let mut driver = Sgdlm::new(models, parents, discounts, sg_cfg)?;
    let burn = driver.max_lag();
    check_burn_in(panel.len(), burn)?;
    let names = cfg.series_names();
    let mut writer = writer;
    for t in 0..panel.len() {
        let y = panel.row(t);
        if t < burn {
            driver.seed_history(&y.view())?;
            continue;
        }
        let step = driver.step(&y.view(), &NoCovariates)?;
        if let Some(w) = writer.as_deref_mut() {
            write_gaussian_step(
                w,
                meta,
                &names,
                t,
                &y,
                &step.outcome,
                Some(step.ess),
                Some(step.entropy_index),
            )?;
        }
        if step.vb_skipped {
            return Err(CliError::abort(format!(
                "importance weights degenerated at t = {t}: effective sample size {:.2} fell below the floor {ess_floor:.2}",
                step.ess
            )));
        }
    }
    Ok(driver)
}

/// Count panel filter: independent conjugate count series.
struct CountPanelFilter {
    states: Vec<DglmState>,
    t: usize,
}

impl CountPanelFilter {
    fn new(cfg: &RunConfig) -> Result<CountPanelFilter> {
        Ok(CountPanelFilter { states: cfg.build_count_models()?, t: 0 })
    }

    /// Advance every series one step; returns per-series updates.
    fn step(&mut self, row: &[u64]) -> Result<Vec<recouple_core::dglm::DglmUpdate>> {
        let t_next = self.t + 1;
        let mut updates = Vec::with_capacity(self.states.len());
        for (state, &y) in self.states.iter_mut().zip(row) {
            let prior = state.evolve(t_next)?;
            let f_vec = prior.spec.layout.build_f(&recouple_core::regression::PredictorInputs::none())?;
            let update = dglm_update(&prior, &f_vec, y, 1.0)?;
            *state = update.posterior.clone();
            updates.push(update);
        }
        self.t = t_next;
        Ok(updates)
    }
}

fn filter_dglm_panel(
    cfg: &RunConfig,
    panel: &Panel,
    meta: &RunMeta,
    writer: Option<&mut ReportWriter>,
) -> Result<CountPanelFilter> {
    let names = cfg.series_names();
    let counts = panel.to_counts(&names)?;
    let mut filter = CountPanelFilter::new(cfg)?;
    let seed = cfg.seed();
    let mut writer = writer;
    for (t, row) in counts.iter().enumerate() {
        let updates = filter.step(row)?;
        if let Some(w) = writer.as_deref_mut() {
            for (j, (name, update)) in names.iter().zip(&updates).enumerate() {
                let mut rec = Record::new("step", meta);
                rec.t = Some(t);
                rec.series = Some(name.clone());
                rec.y = Some(row[j] as f64);
                rec.mean = Some(update.predictive.mean());
                let mut qs = [0.0; 5];
                for (slot, p) in qs.iter_mut().zip(QUANTILES) {
                    *slot = count_quantile(&update.predictive, p);
                }
                set_quantiles(&mut rec, &qs);
                let mut pit_rng = rng::stream(seed, &[TAG_PIT, t as u64, j as u64]);
                rec.pit = Some(pit_count(&update.predictive, row[j], &mut pit_rng));
                rec.log_score = Some(update.log_predictive);
                w.write(&rec)?;
            }
        }
    }
    Ok(filter)
}

/// `fit`: sequential one-step filtering over the panel, one record per
/// (time, series).
pub fn run_fit(
    cfg: &RunConfig,
    panel: &Panel,
    meta: &RunMeta,
    writer: &mut ReportWriter,
) -> Result<()> {
    match cfg.kind {
        Kind::Ddnm => {
            filter_ddnm(cfg, panel, meta, Some(writer))?;
        }
        Kind::Sgdlm => {
            filter_sgdlm(cfg, panel, meta, Some(writer))?;
        }
        Kind::DglmPanel => {
            filter_dglm_panel(cfg, panel, meta, Some(writer))?;
        }
        Kind::Netflow => {
            return Err(CliError::config(
                "kind \"netflow\" runs via the netflow command, not fit",
            ));
        }
    }
    Ok(())
}

/// Emit path records (and optionally raw sample records) from a forecast
/// ensemble.
fn write_ensemble(
    ensemble: &ForecastEnsemble,
    names: &[String],
    meta: &RunMeta,
    raw_samples: bool,
    writer: &mut ReportWriter,
) -> Result<()> {
    let shape = ensemble.samples.shape();
    let (n, k, q) = (shape[0], shape[1], shape[2]);
    for h in 0..k {
        for j in 0..q {
            let mut draws: Vec<f64> =
                (0..n).map(|i| ensemble.samples[[i, h, j]]).collect();
            draws.sort_by(|a, b| a.partial_cmp(b).expect("finite forecast draws"));
            let mean = draws.iter().sum::<f64>() / n as f64;
            let mut rec = Record::new("path", meta);
            rec.h = Some(h + 1);
            rec.series = Some(names[j].clone());
            rec.mean = Some(mean);
            let mut qs = [0.0; 5];
            for (slot, p) in qs.iter_mut().zip(QUANTILES) {
                *slot = sample_quantile(&draws, p);
            }
            set_quantiles(&mut rec, &qs);
            writer.write(&rec)?;
        }
    }
    if raw_samples {
        for h in 0..k {
            for j in 0..q {
                for i in 0..n {
                    let mut rec = Record::new("sample", meta);
                    rec.h = Some(h + 1);
                    rec.series = Some(names[j].clone());
                    rec.draw = Some(i);
                    rec.value = Some(ensemble.samples[[i, h, j]]);
                    writer.write(&rec)?;
                }
            }
        }
    }
    Ok(())
}

/// `forecast`: filter through the panel, then emit k-step path quantiles.
pub fn run_forecast(
    cfg: &RunConfig,
    panel: &Panel,
    meta: &RunMeta,
    raw_samples: bool,
    writer: &mut ReportWriter,
) -> Result<()> {
    let k = cfg.horizon();
    let n = cfg.samples();
    let names = cfg.series_names();
    match cfg.kind {
        Kind::Ddnm => {
            let filter = filter_ddnm(cfg, panel, meta, None)?;
            let seed = rng::child_seed(cfg.seed(), &[TAG_FORECAST]);
            let ensemble = filter.forecast(&NoCovariates, k, n, seed, false)?;
            write_ensemble(&ensemble, &names, meta, raw_samples, writer)?;
        }
        Kind::Sgdlm => {
            let driver = filter_sgdlm(cfg, panel, meta, None)?;
            let forecast = driver.forecast(&NoCovariates, k, n, false)?;
            if forecast.rejection_warning {
                eprintln!(
                    "warning: {} of {} joint draws were rejected as singular; path quantiles may be biased",
                    forecast.rejected_samples, n
                );
            }
            write_ensemble(&forecast.ensemble, &names, meta, raw_samples, writer)?;
        }
        Kind::DglmPanel => {
            let filter = filter_dglm_panel(cfg, panel, meta, None)?;
            let t_end = filter.t;
            for (j, name) in names.iter().enumerate() {
                let mut state = filter.states[j].clone();
                for h in 1..=k {
                    state = state.evolve(t_end + h)?;
                    let f_vec = state
                        .spec
                        .layout
                        .build_f(&recouple_core::regression::PredictorInputs::none())?;
                    let (f, q) = state.link_moments(&f_vec)?;
                    let pair = gamma_match(f, q)?;
                    let fc =
                        CountForecast { shape: pair.shape, rate: pair.rate, exposure: 1.0 };
                    let mut rec = Record::new("path", meta);
                    rec.h = Some(h);
                    rec.series = Some(name.clone());
                    rec.mean = Some(fc.mean());
                    let mut qs = [0.0; 5];
                    for (slot, p) in qs.iter_mut().zip(QUANTILES) {
                        *slot = count_quantile(&fc, p);
                    }
                    set_quantiles(&mut rec, &qs);
                    writer.write(&rec)?;
                    if raw_samples {
                        let mut rng =
                            rng::stream(cfg.seed(), &[TAG_RAW, j as u64, h as u64]);
                        let draws =
                            dglm_forecast(&state, &f_vec, 1.0, n, ForecastMethod::Analytic, &mut rng)?;
                        for (i, &d) in draws.iter().enumerate() {
                            let mut rec = Record::new("sample", meta);
                            rec.h = Some(h);
                            rec.series = Some(name.clone());
                            rec.draw = Some(i);
                            rec.value = Some(d as f64);
                            writer.write(&rec)?;
                        }
                    }
                }
            }
        }
        Kind::Netflow => {
            return Err(CliError::config(
                "kind \"netflow\" runs via the netflow command, not forecast",
            ));
        }
    }
    Ok(())
}

/// One model's sequential joint log-likelihood stream for `compare`.
enum ModelRun {
    Ddnm(MultiSeriesFilter, Panel),
    Sgdlm(Box<Sgdlm>, Panel, f64),
    Dglm(CountPanelFilter, Vec<Vec<u64>>),
}

impl ModelRun {
    /// Rows this model itself needs as lag-window seed data.
    fn burn_in(&self) -> usize {
        match self {
            ModelRun::Ddnm(filter, _) => filter.max_lag(),
            ModelRun::Sgdlm(driver, _, _) => driver.max_lag(),
            ModelRun::Dglm(..) => 0,
        }
    }

    /// Consume row `t` as conditioning data without scoring it: lag seeding
    /// while the model's own lags are unavailable, a silent filtering step
    /// afterwards. Keeps compared models on one scoring window while each
    /// uses the shared conditioning window as fully as its design allows.
    fn condition(&mut self, t: usize) -> Result<()> {
        match self {
            ModelRun::Ddnm(filter, panel) => {
                let y = panel.row(t);
                if t < filter.max_lag() {
                    filter.seed_history(&y.view())?;
                } else {
                    filter.step(&y.view(), &NoCovariates)?;
                }
            }
            ModelRun::Sgdlm(driver, panel, ess_floor) => {
                let y = panel.row(t);
                if t < driver.max_lag() {
                    driver.seed_history(&y.view())?;
                } else {
                    let step = driver.step(&y.view(), &NoCovariates)?;
                    if step.vb_skipped {
                        return Err(CliError::abort(format!(
                            "importance weights degenerated at t = {t}: effective sample size {:.2} fell below the floor {ess_floor:.2}",
                            step.ess
                        )));
                    }
                }
            }
            ModelRun::Dglm(filter, counts) => {
                filter.step(&counts[t])?;
            }
        }
        Ok(())
    }

    fn step(&mut self, t: usize) -> Result<f64> {
        match self {
            ModelRun::Ddnm(filter, panel) => {
                let y = panel.row(t);
                Ok(filter.step(&y.view(), &NoCovariates)?.joint_log_predictive())
            }
            ModelRun::Sgdlm(driver, panel, ess_floor) => {
                let y = panel.row(t);
                let step = driver.step(&y.view(), &NoCovariates)?;
                if step.vb_skipped {
                    return Err(CliError::abort(format!(
                        "importance weights degenerated at t = {t}: effective sample size {:.2} fell below the floor {ess_floor:.2}",
                        step.ess
                    )));
                }
                Ok(step.outcome.joint_log_predictive())
            }
            ModelRun::Dglm(filter, counts) => {
                let updates = filter.step(&counts[t])?;
                Ok(updates.iter().map(|u| u.log_predictive).sum())
            }
        }
    }
}

/// `compare`: run every configuration over the same panel, accumulate
/// power-discounted scores, and emit one record per (time, model).
pub fn run_compare(
    configs: &[RunConfig],
    model_names: &[String],
    panels: &[Panel],
    alpha: f64,
    meta: &RunMeta,
    writer: &mut ReportWriter,
) -> Result<()> {
    let mut sorted_names: Vec<Vec<String>> = configs
        .iter()
        .map(|c| {
            let mut n = c.series_names();
            n.sort();
            n
        })
        .collect();
    let first = sorted_names.remove(0);
    for (i, names) in sorted_names.iter().enumerate() {
        if *names != first {
            return Err(CliError::config(format!(
                "model \"{}\" covers series {{{}}}, but \"{}\" covers {{{}}}; compared models must share one series set",
                model_names[i + 1],
                names.join(", "),
                model_names[0],
                first.join(", ")
            )));
        }
    }

    let mut runs = Vec::with_capacity(configs.len());
    for (cfg, panel) in configs.iter().zip(panels) {
        let run = match cfg.kind {
            Kind::Ddnm => {
                let models = cfg.build_series_models()?;
                let structure = cfg.ddnm_structure()?;
                ModelRun::Ddnm(MultiSeriesFilter::new(models, structure)?, panel.clone())
            }
            Kind::Sgdlm => {
                let models = cfg.build_series_models()?;
                let parents = cfg.parent_indices()?;
                let discounts = cfg.block_discounts();
                let sg_cfg = cfg.sgdlm_config();
                let floor = sg_cfg.ess_floor * sg_cfg.i_samples as f64;
                ModelRun::Sgdlm(
                    Box::new(Sgdlm::new(models, parents, discounts, sg_cfg)?),
                    panel.clone(),
                    floor,
                )
            }
            Kind::DglmPanel => {
                let counts = panel.to_counts(&cfg.series_names())?;
                ModelRun::Dglm(CountPanelFilter::new(cfg)?, counts)
            }
            Kind::Netflow => {
                return Err(CliError::config(
                    "kind \"netflow\" cannot enter a compare run; compare works over series panels",
                ));
            }
        };
        runs.push(run);
    }

    let t_max = panels[0].len();
    // Score every model on one shared window: models needing lag seed rows
    // push the start back for everyone, and the early rows are conditioning
    // data for all models alike.
    let burn = runs.iter().map(ModelRun::burn_in).max().unwrap_or(0);
    check_burn_in(t_max, burn)?;
    for t in 0..burn {
        for run in runs.iter_mut() {
            run.condition(t)?;
        }
    }
    let mut ledger = ScoreLedger::new(runs.len())?;
    let mut log_liks = vec![0.0; runs.len()];
    for t in burn..t_max {
        for (m, run) in runs.iter_mut().enumerate() {
            log_liks[m] = run.step(t)?;
        }
        ledger.accumulate(&log_liks, alpha)?;
        let probabilities = ledger.probabilities();
        for (m, name) in model_names.iter().enumerate() {
            let mut rec = Record::new("score", meta);
            rec.t = Some(t);
            rec.model = Some(name.clone());
            rec.log_lik = Some(log_liks[m]);
            rec.cum_log_lik = Some(ledger.log_scores()[m]);
            rec.discounted_score = Some(ledger.discounted_scores()[m]);
            rec.probability = Some(probabilities[m]);
            writer.write(&rec)?;
        }
    }
    Ok(())
}

/// `netflow`: per-pair count filtering with monitors, plus a per-step
/// gravity decomposition of the fitted within-network rates.
pub fn run_netflow(
    cfg: &RunConfig,
    table: &FlowTable,
    meta: &RunMeta,
    writer: &mut ReportWriter,
) -> Result<()> {
    let section = cfg
        .network
        .as_ref()
        .ok_or_else(|| CliError::config("kind \"netflow\" needs a \"network\" section"))?;
    let net_cfg = section.to_core()?;
    let nodes = net_cfg.nodes;
    let auto_intervene = net_cfg.auto_intervene;
    let panel = FlowPanel::from_records(nodes, &table.records)?;
    debug_assert_eq!(panel.len(), table.periods);
    let mut filter = NetworkFilter::new(net_cfg)?;

    for t in 0..panel.len() {
        let counts = panel.counts_at(t);
        let step = filter.step(&counts.view())?;
        let mut first_signal: Option<(usize, usize)> = None;
        for pair in &step.pairs {
            let monitor = filter.monitor(pair.from, pair.to)?;
            let mut rec = Record::new("flow", meta);
            rec.t = Some(t);
            rec.from = Some(pair.from);
            rec.to = Some(pair.to);
            rec.y = Some(counts[[pair.from, pair.to]] as f64);
            rec.mean = Some(pair.predictive.mean());
            rec.log_score = Some(pair.log_predictive);
            rec.log_l = Some(monitor.log_l);
            rec.run_length = Some(monitor.run_length);
            rec.signal = Some(pair.signaled);
            rec.intervened = Some(pair.intervened);
            writer.write(&rec)?;
            if pair.signaled && first_signal.is_none() {
                first_signal = Some((pair.from, pair.to));
            }
        }
        let rates = filter.within_rates()?;
        let effects = gravity_decompose(&rates.view())?;
        for node in 1..=nodes {
            let mut rec = Record::new("gravity", meta);
            rec.t = Some(t);
            rec.node = Some(node);
            rec.origin = Some(effects.origin[node - 1]);
            rec.destination = Some(effects.destination[node - 1]);
            rec.intensity = Some(effects.intensity);
            writer.write(&rec)?;
        }
        if let Some((from, to)) = first_signal {
            if !auto_intervene {
                return Err(CliError::abort(format!(
                    "monitor signaled on pair ({from}, {to}) at t = {t} and auto-intervention is disabled"
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_quantiles_interpolate() {
        let sorted = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(sample_quantile(&sorted, 0.5), 3.0);
        assert_eq!(sample_quantile(&sorted, 0.0), 1.0);
        assert_eq!(sample_quantile(&sorted, 1.0), 5.0);
        assert!((sample_quantile(&sorted, 0.25) - 2.0).abs() < 1e-12);
        assert!((sample_quantile(&sorted, 0.375) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn student_quantiles_bracket_location() {
        let fc = StudentForecast { location: 2.0, spread: 4.0, dof: 10.0 };
        let lo = student_quantile(&fc, 0.05).unwrap();
        let med = student_quantile(&fc, 0.5).unwrap();
        let hi = student_quantile(&fc, 0.95).unwrap();
        assert!(lo < med && med < hi);
        assert!((med - 2.0).abs() < 1e-12);
        assert!((med - lo - (hi - med)).abs() < 1e-9, "symmetric tails");
    }

    #[test]
    fn count_quantile_is_inverse_cdf() {
        let fc = CountForecast { shape: 30.0, rate: 2.0, exposure: 1.0 };
        for p in QUANTILES {
            let q = count_quantile(&fc, p) as i64;
            assert!(fc.cdf(q) >= p);
            if q > 0 {
                assert!(fc.cdf(q - 1) < p);
            }
        }
    }
}
