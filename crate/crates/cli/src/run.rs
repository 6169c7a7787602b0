//! Subcommand bodies. Each merges flags over the config file, validates, then
//! computes and writes one report.

use serde::Serialize;

use charge_meter::charge::{c_from_delta, c_pairwise, delta_ell, extrapolate, ChargeEstimateSeries, SeriesKind};
use charge_meter::config::{ExperimentConfig, OutputFormat};
use charge_meter::exact::{
    combine_sectors, critical_sector_ff, uniform_quartet, BondCouplings, BoundarySector, FfOrientation, SectorQuartet,
    BETA_C0, T_CRITICAL,
};
use charge_meter::lattice::TorusLattice;
use charge_meter::oracle::{brute_force_z, cycle_space_sector_sums, verify_sign_table, MAX_CYCLE_SITES};
use charge_meter::report::{emit, to_json, Cell, CsvTable, Report};
use charge_meter::rg::{rg_check, RgCheck, ScaleIndex};
use charge_meter::strings::{lemma1_check, ExpansionOptions, Lemma1Row, PathConvention};
use charge_meter::strip::{dominant_pair, locate_beta_c, PowerOptions, TransferOperator};
use charge_meter::suites::{critical_point, run_suite, Verdict};
use charge_meter::{Error, LogNumber};

use crate::{load_config, Command, Common, Failure, Model, Size};

type Outcome = Result<(), Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

fn merge_size(cfg: &mut ExperimentConfig, size: &Size) {
    if size.ell.is_some() {
        cfg.lattice.ell = size.ell;
    }
    if size.big_l.is_some() {
        cfg.lattice.big_l = size.big_l;
    }
}

fn merge_model(cfg: &mut ExperimentConfig, model: &Model) {
    if let Some(j) = model.j {
        cfg.model.j = j;
    }
    if let Some(l) = model.lambda {
        cfg.model.lambda = l;
    }
    if let Some(s) = &model.v_shells {
        cfg.model.v_shells = s.clone();
    }
}

fn merge_ell_list(cfg: &mut ExperimentConfig, list: &Option<Vec<usize>>) {
    if list.is_some() {
        cfg.lattice.ell_list = list.clone();
    }
}

fn lattice(cfg: &ExperimentConfig) -> Result<TorusLattice, Failure> {
    Ok(TorusLattice::new(cfg.require_ell()?, cfg.require_big_l()?)?)
}

fn write_json<T: Serialize>(cfg: &ExperimentConfig, command: &str, payload: T) -> Outcome {
    let text = to_json(&Report::new(command, payload))?;
    emit(&text, cfg.output.path.as_deref())?;
    Ok(())
}

fn write_table<T: Serialize>(cfg: &ExperimentConfig, command: &str, table: CsvTable, payload: T) -> Outcome {
    match cfg.output.format {
        OutputFormat::Json => write_json(cfg, command, payload),
        OutputFormat::Csv => {
            emit(&table.to_csv()?, cfg.output.path.as_deref())?;
            Ok(())
        }
    }
}

pub fn dispatch(common: &Common, command: Command) -> Outcome {
    let mut cfg = load_config(common)?;
    match command {
        Command::Exact { size, t } => {
            merge_size(&mut cfg, &size);
            cfg.run.t = t.or(cfg.run.t);
            cfg.validate()?;
            exact(&cfg)
        }
        Command::Oracle { size, model, beta, seed } => {
            merge_size(&mut cfg, &size);
            merge_model(&mut cfg, &model);
            cfg.run.beta = beta.or(cfg.run.beta);
            cfg.run.seed = seed.or(cfg.run.seed);
            cfg.validate()?;
            oracle(&cfg)
        }
        Command::Lemma1 { size, model, betas, convention } => {
            merge_size(&mut cfg, &size);
            merge_model(&mut cfg, &model);
            cfg.run.betas = betas.or(cfg.run.betas);
            cfg.run.convention = convention.or(cfg.run.convention);
            cfg.validate()?;
            lemma1(&cfg)
        }
        Command::Strip { ell_list, model, beta, locate, bracket } => {
            merge_ell_list(&mut cfg, &ell_list);
            merge_model(&mut cfg, &model);
            cfg.run.beta = beta.or(cfg.run.beta);
            cfg.run.widths = locate.or(cfg.run.widths);
            if let Some(b) = bracket {
                let [lo, hi] = b[..] else {
                    return Err(invalid("--bracket takes two values lo,hi"));
                };
                cfg.run.bracket = Some([lo, hi]);
            }
            cfg.validate()?;
            strip(&cfg)
        }
        Command::Charge { mode, ell_list, model, beta, extrapolation_order } => {
            merge_ell_list(&mut cfg, &ell_list);
            merge_model(&mut cfg, &model);
            cfg.run.mode = mode.or(cfg.run.mode);
            cfg.run.beta = beta.or(cfg.run.beta);
            cfg.run.extrapolation_order = extrapolation_order.or(cfg.run.extrapolation_order);
            cfg.validate()?;
            charge(&cfg)
        }
        Command::RgCheck { size, h_range, checks } => {
            merge_size(&mut cfg, &size);
            if let Some(h) = h_range {
                let [lo, hi] = h[..] else {
                    return Err(invalid("--h-range takes two values lo,hi"));
                };
                cfg.run.h_range = Some([lo, hi]);
            }
            cfg.run.checks = checks.or(cfg.run.checks);
            cfg.validate()?;
            rg(&cfg)
        }
        Command::Reproduce { suite, lambda } => reproduce(&cfg, &suite, lambda),
    }
}

#[derive(Serialize)]
struct ExactReport {
    ell: usize,
    big_l: usize,
    t: f64,
    sectors: SectorQuartet<LogNumber>,
    z: LogNumber,
    /// Ferdinand–Fisher forms at the critical point, order mm, mp, pm.
    ff_rows: Option<Vec<LogNumber>>,
    ff_columns: Option<Vec<LogNumber>>,
}

fn exact(cfg: &ExperimentConfig) -> Outcome {
    let lat = lattice(cfg)?;
    let t = cfg.run.t.unwrap_or(T_CRITICAL);
    let sectors = uniform_quartet(&lat, t)?;
    let z = combine_sectors(&sectors)?;
    let ff = |o| -> Result<Option<Vec<LogNumber>>, Error> {
        if t != T_CRITICAL {
            return Ok(None);
        }
        [BoundarySector::MM, BoundarySector::MP, BoundarySector::PM]
            .into_iter()
            .map(|s| critical_sector_ff(&lat, s, o))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    };
    let mut table = CsvTable::new(vec!["sector", "sign", "log_abs"]);
    for s in BoundarySector::ALL {
        let v = sectors.get(s);
        table.push(vec![s.label().into(), (v.sign as i32).into(), v.log_abs.into()]);
    }
    table.push(vec!["z".into(), (z.sign as i32).into(), z.log_abs.into()]);
    let rep = ExactReport {
        ell: lat.ell(),
        big_l: lat.big_l(),
        t,
        sectors,
        z,
        ff_rows: ff(FfOrientation::Rows)?,
        ff_columns: ff(FfOrientation::Columns)?,
    };
    write_table(cfg, "exact", table, rep)
}

#[derive(Serialize)]
struct OracleReport {
    ell: usize,
    big_l: usize,
    beta: f64,
    z_brute: LogNumber,
    /// Signed winding-class recombinations, nearest-neighbour models only.
    cycle_space_sectors: Option<SectorQuartet<LogNumber>>,
    sign_table_residuals: Option<Vec<f64>>,
    sign_table_passed: Option<bool>,
}

fn oracle(cfg: &ExperimentConfig) -> Outcome {
    let lat = lattice(cfg)?;
    let spec = cfg.model.interaction()?;
    let beta = cfg.run.beta.unwrap_or(BETA_C0);
    let z_brute = brute_force_z(&lat, &spec, beta)?;
    let t_map = BondCouplings::uniform(&lat, spec.j_coupling).t_map(beta);
    let cycles = if spec.is_nearest_neighbour() && lat.n_sites() <= MAX_CYCLE_SITES {
        Some(cycle_space_sector_sums(&lat, &t_map)?.sectors())
    } else {
        None
    };
    let (mut residuals, mut passed) = (None, None);
    if let Some(seed) = cfg.run.seed {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let random: Vec<f64> = (0..lat.n_bonds()).map(|_| rng.gen_range(0.05..0.95)).collect();
        let rep = verify_sign_table(&lat, &random, 1e-9)?;
        residuals = Some(rep.residuals);
        passed = Some(rep.passed);
    }
    let rep = OracleReport {
        ell: lat.ell(),
        big_l: lat.big_l(),
        beta,
        z_brute,
        cycle_space_sectors: cycles,
        sign_table_residuals: residuals,
        sign_table_passed: passed,
    };
    write_json(cfg, "oracle", rep)
}

fn lemma1(cfg: &ExperimentConfig) -> Outcome {
    let lat = lattice(cfg)?;
    let spec = cfg.model.interaction()?;
    let convention = match cfg.run.convention.as_deref() {
        None => PathConvention::SPLIT,
        Some(s) => PathConvention::parse(s).ok_or_else(|| invalid(format!("unknown path convention {s:?}")))?,
    };
    let opts = ExpansionOptions { convention, ..Default::default() };
    let betas = cfg.run.betas.clone().unwrap_or_else(|| vec![0.2, 0.44, 0.7]);
    let rows = betas.iter().map(|&b| lemma1_check(&lat, &spec, b, &opts)).collect::<Result<Vec<Lemma1Row>, _>>()?;
    let mut table = CsvTable::new(vec!["beta", "ratio", "zmp_plus_zpm", "consistency", "holds", "convention"]);
    for r in &rows {
        table.push(vec![
            r.beta.into(),
            r.ratio.into(),
            r.sumpos_margin.into(),
            r.consistency.into(),
            if r.holds() { "true" } else { "false" }.into(),
            r.convention.as_str().into(),
        ]);
    }
    write_table(cfg, "lemma1", table, rows)
}

#[derive(Serialize)]
struct StripRow {
    ell: usize,
    free_energy: f64,
    xi_over_ell: f64,
    iterations: usize,
}

#[derive(Serialize)]
struct StripReport {
    beta: f64,
    rows: Vec<StripRow>,
    crossing: Option<f64>,
}

fn strip(cfg: &ExperimentConfig) -> Outcome {
    let spec = cfg.model.interaction()?;
    let beta = cfg.run.beta.unwrap_or(BETA_C0);
    let opts = PowerOptions::default();
    let ells = cfg.lattice.ell_list.clone().unwrap_or_default();
    let mut rows = Vec::new();
    for &ell in &ells {
        let op = TransferOperator::new(ell, beta, &spec)?;
        let sd = dominant_pair(&op, &opts)?;
        rows.push(StripRow {
            ell,
            free_energy: sd.log_lambda1 / ell as f64,
            xi_over_ell: sd.xi / ell as f64,
            iterations: sd.iterations,
        });
    }
    let crossing = match &cfg.run.widths {
        None => None,
        Some(w) => {
            let [a, b] = w[..] else {
                return Err(invalid("--locate takes two widths"));
            };
            let [lo, hi] = cfg.run.bracket.unwrap_or([0.25, 0.5]);
            Some(locate_beta_c(&spec, (a, b), (lo, hi), 1e-10, &opts)?)
        }
    };
    if rows.is_empty() && crossing.is_none() {
        return Err(invalid("strip needs --ell-list or --locate"));
    }
    let mut table = CsvTable::new(vec!["ell", "free_energy", "xi_over_ell"]);
    for r in &rows {
        table.push(vec![r.ell.into(), r.free_energy.into(), r.xi_over_ell.into()]);
    }
    write_table(cfg, "strip", table, StripReport { beta, rows, crossing })
}

#[derive(Serialize)]
struct ChargeRow {
    ell: usize,
    f_or_delta: f64,
    c_pairwise: Option<f64>,
    c_extrapolated: Option<f64>,
}

#[derive(Serialize)]
struct ChargeSummary {
    mode: String,
    c_hat: f64,
    spread: f64,
    beta_c_used: Option<f64>,
    rows: Vec<ChargeRow>,
}

fn charge(cfg: &ExperimentConfig) -> Outcome {
    let mode = cfg.run.mode.clone().unwrap_or_else(|| "analytic".into());
    let ells = cfg.require_ell_list()?;
    let order = cfg.run.extrapolation_order.unwrap_or(1);
    if order > 2 {
        return Err(invalid(format!("extrapolation order must be at most 2, got {order}")));
    }
    let (series, values, beta_c) = match mode.as_str() {
        "analytic" => {
            let deltas = ells.iter().map(|&l| delta_ell(l)).collect::<Result<Vec<_>, _>>()?;
            let cs = ells.iter().map(|&l| Ok((l, c_from_delta(l)?))).collect::<Result<Vec<_>, Error>>()?;
            (ChargeEstimateSeries::new(SeriesKind::Charge, cs)?, deltas, None)
        }
        "strip" => {
            let spec = cfg.model.interaction()?;
            let beta = match cfg.run.beta {
                Some(b) => b,
                None if spec.is_nearest_neighbour() => BETA_C0,
                None => critical_point(spec.lambda)?.beta_c,
            };
            let opts = PowerOptions::default();
            let f = ells
                .iter()
                .map(|&l| Ok((l, charge_meter::strip::strip_free_energy(l, beta, &spec, &opts)?)))
                .collect::<Result<Vec<_>, Error>>()?;
            let values = f.iter().map(|p| p.1).collect();
            (ChargeEstimateSeries::new(SeriesKind::FreeEnergy, f)?, values, Some(beta))
        }
        other => return Err(invalid(format!("--mode must be analytic or strip, got {other:?}"))),
    };
    let ex = extrapolate(&series, order)?;
    let mut rows = Vec::new();
    for (i, (&ell, &v)) in ells.iter().zip(&values).enumerate() {
        let pairwise = match series.kind {
            SeriesKind::Charge => Some(series.points[i].1),
            SeriesKind::FreeEnergy if i > 0 => Some(c_pairwise(series.points[i - 1], series.points[i])?),
            SeriesKind::FreeEnergy => None,
        };
        let last = i + 1 == ells.len();
        rows.push(ChargeRow { ell, f_or_delta: v, c_pairwise: pairwise, c_extrapolated: last.then_some(ex.value) });
    }
    let opt = |x: Option<f64>| x.map_or(Cell::Text(String::new()), Cell::Float);
    let mut table = CsvTable::new(vec!["ell", "f_or_delta", "c_pairwise", "c_extrapolated"]);
    for r in &rows {
        table.push(vec![r.ell.into(), r.f_or_delta.into(), opt(r.c_pairwise), opt(r.c_extrapolated)]);
    }
    let summary = ChargeSummary { mode, c_hat: ex.value, spread: ex.spread, beta_c_used: beta_c, rows };
    if cfg.output.format == OutputFormat::Csv {
        eprintln!("{}", to_json(&Report::new("charge", &summary))?.trim_end());
    }
    write_table(cfg, "charge", table, summary)
}

fn rg(cfg: &ExperimentConfig) -> Outcome {
    let ell = cfg.lattice.ell.unwrap_or(64);
    let big_l = cfg.lattice.big_l.unwrap_or(ell);
    let [lo, hi] = cfg.run.h_range.unwrap_or([ScaleIndex::infrared(ell) + 1, 0]);
    let checks = match &cfg.run.checks {
        None => RgCheck::ALL.to_vec(),
        Some(names) => names
            .iter()
            .map(|n| RgCheck::parse(n).ok_or_else(|| invalid(format!("unknown check {n:?}"))))
            .collect::<Result<Vec<_>, _>>()?,
    };
    write_json(cfg, "rg-check", rg_check(ell, big_l, (lo, hi), &checks)?)
}

fn reproduce(cfg: &ExperimentConfig, suite: &str, lambda: Option<f64>) -> Outcome {
    let verdicts: Vec<Verdict> = run_suite(suite, lambda)?;
    for v in &verdicts {
        eprintln!("{}", v.line());
    }
    write_json(cfg, "reproduce", &verdicts)?;
    let failed: Vec<String> = verdicts.iter().filter(|v| !v.passed).map(|v| v.suite.clone()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verdict(format!("failing suites: {}", failed.join(", "))))
    }
}
