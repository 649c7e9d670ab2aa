//! `sdcert` command line.
//!
//! Exit codes: 0 pass or certified, 2 fail or falsified, 3 inconclusive or
//! skipped, 1 usage or runtime error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sdcert_core::consistency::{estimate_epc, estimate_stc, estimate_stl, estimate_stlc, ConsistencyCertificate, ConsistencyConfig, Property};
use sdcert_core::dtmodels::{close_loop, simulate, ClosedLoopMap, DtModelKind, Limits, PlantModel, SampledFlow, Tolerances};
use sdcert_core::dynamics::{AtZeroPeriod, CtLaw, DtLaw, ExprLaw, Plant, ZeroLaw};
use sdcert_core::harness::{self, catalog, CheckId, HarnessConfig, Outcome, SystemRun, VerifySummary};
use sdcert_core::sampling::SeqDescriptor;
use sdcert_core::stability::{certify_ct, certify_vsr, search_t_star, BatchSpec, StabilityConfig, StabilityProperty, StabilityVerdict, Status};
use sdcert_core::sysdsl::{parse_system, SystemDef};
use sdcert_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_UNDECIDED: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "sdcert", version, about = "Consistency and stability certificates for sampled-data control under nonuniform sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for artifacts (`<system>/<check>.json` and `summary.json`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug, Clone)]
struct Source {
    /// Catalog system name.
    #[arg(long, conflicts_with = "file")]
    system: Option<String>,
    /// System definition file.
    #[arg(long)]
    file: Option<PathBuf>,
    /// Sampled law `[U.<name>]`; defaults to the catalog law or the first one in the file.
    #[arg(long)]
    law: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a system file.
    Parse {
        path: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate one closed loop along a sampling sequence.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// euler, rk4, exact or he.
        #[arg(long, default_value = "exact")]
        model: String,
        /// Initial state, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        /// `kind[:key=value,...]`, e.g. `dwell:t_bar=0.5,len=100`.
        #[arg(long, default_value = "constant")]
        seq: String,
        #[arg(long = "Tbar")]
        t_bar: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate EPC, StC, StL or StLC.
    Consistency {
        #[arg(long)]
        property: String,
        #[command(flatten)]
        source: Source,
        /// First model (EPC, StLC).
        #[arg(long, default_value = "euler")]
        a: String,
        /// Second model (EPC).
        #[arg(long, default_value = "exact")]
        b: String,
        /// Second law for StC; `u_c` or a law name. Defaults to `u_c`.
        #[arg(long)]
        law2: Option<String>,
        #[arg(long = "M", default_value_t = 1.0)]
        m: f64,
        /// Input radius for StLC.
        #[arg(long = "E", default_value_t = 1.0)]
        e: f64,
        #[arg(long = "Tbar", default_value_t = 0.5)]
        t_bar: f64,
        #[arg(long, default_value_t = 4096)]
        samples: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Certify or falsify a stability property.
    Stability {
        /// sps-vsr, les-vsr, sles-vsr, ss-vsr, ses-vsr, gas, les, gales or ges.
        #[arg(long)]
        property: String,
        #[command(flatten)]
        source: Source,
        /// Closed loop for VSR properties: euler, rk4, exact or he.
        #[arg(long, default_value = "exact")]
        model: String,
        #[arg(long = "M", default_value_t = 1.0)]
        m: f64,
        #[arg(long = "Tbar", default_value_t = 0.1)]
        t_bar: f64,
        #[arg(long = "R0")]
        r0: Option<f64>,
        /// Batch size: default or light.
        #[arg(long, default_value = "default")]
        batch: String,
        /// Bisect the largest certified T̄ in `lo:hi`.
        #[arg(long)]
        search: Option<String>,
        #[arg(long, default_value_t = 8)]
        iterations: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Run the cross-checks over catalog systems.
    Verify {
        /// 1, 2, 3, L1, L2, L3, L4 or P1; repeatable, all when omitted.
        #[arg(long)]
        theorem: Vec<String>,
        #[arg(long, conflicts_with = "all")]
        system: Vec<String>,
        #[arg(long)]
        all: bool,
        #[arg(long = "M")]
        m: Option<f64>,
        #[arg(long = "Tbar")]
        t_bar: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Inspect the built-in catalog.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
}

#[derive(Subcommand, Debug)]
enum CatalogAction {
    List {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug)]
enum CliError {
    Core(Error),
    Parse { origin: String, diag: sdcert_core::sysdsl::ParseDiagnostic },
    Usage(String),
    Io(std::io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(Error::Parse(d)) => write!(f, "parse error at {d}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Parse { origin, diag } => write!(f, "{origin}:{diag}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn status_code(s: Status) -> i32 {
    match s {
        Status::Certified => EXIT_OK,
        Status::Falsified => EXIT_FAIL,
        Status::Inconclusive => EXIT_UNDECIDED,
    }
}

fn outcome_code(o: Outcome) -> i32 {
    match o {
        Outcome::Pass => EXIT_OK,
        Outcome::Fail => EXIT_FAIL,
        Outcome::Skipped => EXIT_UNDECIDED,
    }
}

fn dispatch(cmd: Command) -> CliResult<i32> {
    match cmd {
        Command::Parse { path, common } => cmd_parse(&path, &common),
        Command::Simulate { source, model, x0, seq, t_bar, common } => cmd_simulate(&source, &model, &x0, &seq, t_bar, &common),
        Command::Consistency { property, source, a, b, law2, m, e, t_bar, samples, common } => {
            let cfg = ConsistencyConfig::new(t_bar).samples(samples).seed(common.seed);
            cmd_consistency(&property, &source, (&a, &b), law2.as_deref(), (m, e), &cfg, &common)
        }
        Command::Stability { property, source, model, m, t_bar, r0, batch, search, iterations, common } => {
            let batch = match batch.as_str() {
                "default" => BatchSpec::default(),
                "light" => BatchSpec::light(),
                other => return Err(CliError::Usage(format!("unknown batch `{other}` (default, light)"))),
            };
            let mut cfg = StabilityConfig::new(m, t_bar).batch(batch).seed(common.seed);
            if let Some(r) = r0 {
                cfg = cfg.r0(r);
            }
            cmd_stability(&property, &source, &model, &cfg, search.as_deref(), iterations, &common)
        }
        Command::Verify { theorem, system, all, m, t_bar, samples, common } => {
            let mut cfg = HarnessConfig::default().seed(common.seed);
            if let Some(m) = m {
                cfg.m = m;
            }
            if let Some(t) = t_bar {
                cfg.t_bar = t;
            }
            if let Some(s) = samples {
                cfg.samples = s;
            }
            if !all && system.is_empty() {
                return Err(CliError::Usage("verify needs --system NAME or --all".into()));
            }
            cmd_verify(&theorem, &system, &cfg, &common)
        }
        Command::Catalog { action: CatalogAction::List { common } } => cmd_catalog(&common),
    }
}

fn read_system(path: &Path) -> CliResult<SystemDef> {
    let src = fs::read_to_string(path)?;
    parse_system(&src).map_err(|diag| CliError::Parse { origin: path.display().to_string(), diag })
}

/// The plant and laws a subcommand works on.
struct Subject {
    name: String,
    def: SystemDef,
    plant: Arc<Plant>,
    u_c: CtLaw,
    u: DtLaw,
}

impl Subject {
    fn load(src: &Source) -> CliResult<Self> {
        let (name, def, default_law) = match (&src.system, &src.file) {
            (Some(s), _) => {
                let e = harness::find(s)?;
                (e.name.to_string(), e.def()?, e.law.map(str::to_string))
            }
            (None, Some(p)) => {
                let def = read_system(p)?;
                let name = def.name.clone().unwrap_or_else(|| p.file_stem().map_or("system".into(), |s| s.to_string_lossy().into_owned()));
                let first = def.law_names().next().map(str::to_string);
                (name, def, first)
            }
            (None, None) => return Err(CliError::Usage("give --system NAME or --file PATH".into())),
        };
        let plant = Arc::new(Plant::from_def(&def));
        let zero = || -> DtLaw { Arc::new(ZeroLaw { n: def.n, m: def.m }) };
        let u: DtLaw = match src.law.clone().or(default_law) {
            Some(l) => ExprLaw::dt_from_def(&def, &l)?.into_arc(),
            None => zero(),
        };
        let u_c: CtLaw = match ExprLaw::ct_from_def(&def) {
            Some(l) => l.into_arc(),
            None if def.m == 0 => zero(),
            None => Arc::new(AtZeroPeriod::new(u.clone())),
        };
        Ok(Subject { name, def, plant, u_c, u })
    }

    fn law(&self, name: &str) -> CliResult<DtLaw> {
        Ok(match name {
            "u_c" => self.u_c.clone(),
            "U" => self.u.clone(),
            other => ExprLaw::dt_from_def(&self.def, other)?.into_arc(),
        })
    }

    fn map(&self, model: &str) -> CliResult<Box<dyn ClosedLoopMap>> {
        if model == "he" {
            return Ok(Box::new(SampledFlow::new(self.plant.clone(), self.u_c.clone(), Tolerances::default())?));
        }
        let kind = DtModelKind::parse(model, Tolerances::default())?;
        Ok(Box::new(close_loop(kind, self.plant.clone(), self.u.clone())?))
    }
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect::<String>().trim_matches('_').to_string()
}

fn write_artifact(common: &Common, system: &str, check: &str, body: &str) -> CliResult<()> {
    if let Some(out) = &common.out {
        let dir = out.join(slug(system));
        fs::create_dir_all(&dir)?;
        let ext = if common.format == Format::Csv { "csv" } else { "json" };
        fs::write(dir.join(format!("{}.{ext}", slug(check))), body)?;
    }
    Ok(())
}

fn write_summary<S: Serialize>(common: &Common, summary: &S) -> CliResult<()> {
    if let Some(out) = &common.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("summary.json"), serde_json::to_string_pretty(summary)? + "\n")?;
    }
    Ok(())
}

fn emit(common: &Common, system: &str, check: &str, json: &str, csv: impl FnOnce() -> CliResult<String>) -> CliResult<()> {
    let body = match common.format {
        Format::Json => json.to_string() + "\n",
        Format::Csv => csv()?,
    };
    print!("{body}");
    write_artifact(common, system, check, &body)
}

fn csv_rows(header: &[&str], rows: Vec<Vec<String>>) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

#[derive(Serialize)]
struct ParseSummary<'a> {
    name: Option<&'a str>,
    n: usize,
    m: usize,
    has_u_c: bool,
    laws: Vec<&'a str>,
    params: &'a std::collections::BTreeMap<String, f64>,
}

fn cmd_parse(path: &Path, common: &Common) -> CliResult<i32> {
    let def = read_system(path)?;
    let s = ParseSummary { name: def.name.as_deref(), n: def.n, m: def.m, has_u_c: def.u_c.is_some(), laws: def.law_names().collect(), params: &def.params };
    let json = serde_json::to_string_pretty(&s)?;
    let name = def.name.clone().unwrap_or_else(|| "system".into());
    emit(common, &name, "parse", &json, || csv_rows(&["n", "m", "laws"], vec![vec![def.n.to_string(), def.m.to_string(), s.laws.join(" ")]]))?;
    Ok(EXIT_OK)
}

fn parse_vector(s: &str) -> CliResult<Vec<f64>> {
    s.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad number `{v}` in `{s}`")))).collect()
}

fn cmd_simulate(source: &Source, model: &str, x0: &str, seq: &str, t_bar: Option<f64>, common: &Common) -> CliResult<i32> {
    let subject = Subject::load(source)?;
    let map = subject.map(model)?;
    let x0 = parse_vector(x0)?;
    if x0.len() != map.dim() {
        return Err(CliError::Usage(format!("x0 has {} entries, the system has n = {}", x0.len(), map.dim())));
    }
    let mut desc = SeqDescriptor::from_str(seq)?;
    if let Some(t) = t_bar.filter(|_| !seq.contains("t_bar=")) {
        desc.t_bar = t;
    }
    if !seq.contains("seed=") {
        desc.seed = common.seed;
    }
    let traj = simulate(map.as_ref(), &x0, &desc.generate()?, Limits::default())?;
    emit(common, &subject.name, "trajectory", &traj.to_json()?, || Ok(traj.to_csv()?))?;
    Ok(if traj.error.is_some() { EXIT_ERROR } else { EXIT_OK })
}

fn consistency_csv(c: &ConsistencyCertificate) -> CliResult<String> {
    let mut rows = Vec::new();
    if let Some(rho) = &c.rho {
        rows.extend(rho.table.iter().map(|r| vec![format!("{:e}", r.t), "rho".into(), format!("{:e}", r.rho)]));
    }
    rows.extend(c.k_table.iter().map(|g| vec![format!("{:e}", g.t), "K".into(), format!("{:e}", g.value)]));
    csv_rows(&["T", "quantity", "value"], rows)
}

fn cmd_consistency(property: &str, source: &Source, models: (&str, &str), law2: Option<&str>, (m, e): (f64, f64), cfg: &ConsistencyConfig, common: &Common) -> CliResult<i32> {
    let subject = Subject::load(source)?;
    let p = Property::parse(property)?;
    let cert = match p {
        Property::Epc => estimate_epc(subject.map(models.0)?.as_ref(), subject.map(models.1)?.as_ref(), m, cfg)?,
        Property::Stl => estimate_stl(subject.u.as_ref(), m, cfg)?,
        Property::Stc => estimate_stc(subject.law(law2.unwrap_or("u_c"))?.as_ref(), subject.u.as_ref(), m, cfg)?,
        Property::Stlc => {
            let kind = DtModelKind::parse(models.0, Tolerances::default())?;
            estimate_stlc(&PlantModel::new(kind, subject.plant.clone())?, m, e, cfg)?
        }
    };
    emit(common, &subject.name, p.name(), &cert.to_json()?, || consistency_csv(&cert))?;
    write_summary(common, &serde_json::json!({ "system": subject.name, "property": p.name(), "status": cert.status }))?;
    Ok(status_code(cert.status))
}

fn stability_csv(v: &StabilityVerdict) -> CliResult<String> {
    let rows = v
        .rungs
        .iter()
        .map(|r| vec![format!("{:e}", r.radius), format!("{:e}", r.fit.k), format!("{:e}", r.fit.lambda), r.fit.feasible.to_string()])
        .collect();
    csv_rows(&["radius", "K", "lambda", "feasible"], rows)
}

fn cmd_stability(property: &str, source: &Source, model: &str, cfg: &StabilityConfig, search: Option<&str>, iterations: usize, common: &Common) -> CliResult<i32> {
    let subject = Subject::load(source)?;
    let p = StabilityProperty::parse(property)?;
    if let Some(bracket) = search {
        let (lo, hi) = bracket.split_once(':').ok_or_else(|| CliError::Usage("--search expects lo:hi".into()))?;
        let lo = lo.trim().parse().map_err(|_| CliError::Usage(format!("bad bracket `{bracket}`")))?;
        let hi = hi.trim().parse().map_err(|_| CliError::Usage(format!("bad bracket `{bracket}`")))?;
        if p.is_ct() {
            return Err(CliError::Usage("--search applies to VSR properties".into()));
        }
        let map = subject.map(model)?;
        return match search_t_star(map.as_ref(), p, cfg, (lo, hi), iterations) {
            Ok(r) => {
                let json = serde_json::to_string_pretty(&r)?;
                let rows = r.evaluations.iter().map(|(t, s)| vec![format!("{t:e}"), s.to_string()]).collect();
                emit(common, &subject.name, &format!("{}-tstar", p.key()), &json, || csv_rows(&["T_bar", "status"], rows))?;
                Ok(EXIT_OK)
            }
            Err(e @ Error::NoSignChange { .. }) => {
                eprintln!("{e}");
                Ok(EXIT_UNDECIDED)
            }
            Err(e) => Err(e.into()),
        };
    }
    let v = if p.is_ct() {
        certify_ct(subject.plant.clone(), subject.u_c.clone(), p, cfg)?
    } else {
        certify_vsr(subject.map(model)?.as_ref(), p, cfg)?
    };
    emit(common, &subject.name, &p.key(), &v.to_json()?, || stability_csv(&v))?;
    write_summary(common, &serde_json::json!({ "system": subject.name, "property": p.name(), "status": v.status }))?;
    Ok(status_code(v.status))
}

fn verify_csv(runs: &[SystemRun]) -> CliResult<String> {
    let mut rows = Vec::new();
    for r in runs {
        for t in &r.reports {
            for i in &t.items {
                rows.push(vec![r.system.clone(), t.theorem.to_string(), i.item.clone(), i.outcome.to_string(), i.note.clone()]);
            }
        }
    }
    csv_rows(&["system", "theorem", "item", "outcome", "note"], rows)
}

fn cmd_verify(theorems: &[String], systems: &[String], cfg: &HarnessConfig, common: &Common) -> CliResult<i32> {
    let checks: Vec<CheckId> = if theorems.is_empty() {
        CheckId::ALL.to_vec()
    } else {
        theorems.iter().flat_map(|t| t.split(',')).map(CheckId::parse).collect::<Result<_, _>>()?
    };
    let names: Vec<&str> = systems.iter().map(String::as_str).collect();
    let (runs, summary): (Vec<SystemRun>, VerifySummary) = harness::verify(&names, &checks, cfg)?;
    let reports: Vec<_> = runs.iter().flat_map(|r| &r.reports).collect();
    let json = if reports.len() == 1 { reports[0].to_json()? } else { serde_json::to_string_pretty(&reports)? };
    let body = match common.format {
        Format::Json => json + "\n",
        Format::Csv => verify_csv(&runs)?,
    };
    print!("{body}");
    if let Some(out) = &common.out {
        for r in &runs {
            let dir = out.join(slug(&r.system));
            fs::create_dir_all(&dir)?;
            for t in &r.reports {
                fs::write(dir.join(format!("{}.json", t.theorem)), t.to_json()? + "\n")?;
            }
            for (k, v) in &r.artifacts {
                fs::write(dir.join(format!("{}.json", slug(k))), serde_json::to_string_pretty(v)? + "\n")?;
            }
            if let Some(o) = &r.oracle {
                fs::write(dir.join("oracle.json"), serde_json::to_string_pretty(o)? + "\n")?;
            }
        }
        write_summary(common, &summary)?;
    }
    let mut line = String::new();
    let _ = write!(line, "{} pass, {} fail, {} skipped", summary.tally.pass, summary.tally.fail, summary.tally.skipped);
    eprintln!("{line}");
    Ok(outcome_code(Outcome::combine(reports.iter().map(|r| r.outcome))))
}

#[derive(Serialize)]
struct CatalogRow {
    name: &'static str,
    summary: &'static str,
    oracle: &'static str,
    law: Option<&'static str>,
    alt_law: Option<&'static str>,
    expected: std::collections::BTreeMap<StabilityProperty, Status>,
}

fn cmd_catalog(common: &Common) -> CliResult<i32> {
    let rows: Vec<CatalogRow> = catalog()
        .iter()
        .map(|e| CatalogRow { name: e.name, summary: e.summary, oracle: e.oracle, law: e.law, alt_law: e.alt_law, expected: e.expected.clone() })
        .collect();
    let json = serde_json::to_string_pretty(&rows)?;
    let csv = || {
        let rows = rows.iter().map(|r| vec![r.name.to_string(), r.summary.to_string(), r.oracle.to_string()]).collect();
        csv_rows(&["name", "summary", "oracle"], rows)
    };
    emit(common, "catalog", "list", &json, csv)?;
    Ok(EXIT_OK)
}
