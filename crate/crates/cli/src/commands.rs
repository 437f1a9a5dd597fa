use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context};
use mjn_core::fork::{fork_mgfs, fork_model};
use mjn_core::sim::fmt_f64;
use mjn_core::variational::{
    kkt_cascade, kkt_interior, kkt_mixture, min_cascade_action, min_interior_action,
    min_mixture_action, y_climb_cost,
};
use mjn_core::{
    analyze as analyze_jackson, estimate_overflow, fluid_path, fork_analyze, Error, ForkParams,
    LdAnalysis, ModelMgfs, NetworkParams, SimConfig, WalkModel,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::output::{emit, num, opt, to_json};
use crate::{Common, Failure, Format, Model, SimulateArgs, SweepArgs};

/// Largest analytic/numerical gap accepted by `verify`.
const VERIFY_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(untagged)]
enum Params {
    Jackson(NetworkParams),
    Fork(ForkParams),
}

impl Params {
    fn from_value(model: Model, v: Value) -> anyhow::Result<Self> {
        let text = v.to_string();
        Ok(match model {
            Model::JacksonMod => Params::Jackson(NetworkParams::from_json(&text)?),
            Model::Fork => Params::Fork(ForkParams::from_json(&text)?),
        })
    }

    fn analyze(&self) -> mjn_core::Result<LdAnalysis> {
        match self {
            Params::Jackson(p) => analyze_jackson(p),
            Params::Fork(p) => fork_analyze(p),
        }
    }

    fn mgfs(&self) -> mjn_core::Result<ModelMgfs> {
        match self {
            Params::Jackson(p) => ModelMgfs::jackson(p),
            Params::Fork(p) => fork_mgfs(p),
        }
    }

    fn walk(&self) -> mjn_core::Result<WalkModel> {
        match self {
            Params::Jackson(p) => WalkModel::jackson(p),
            Params::Fork(p) => fork_model(p),
        }
    }
}

/// Reads `--input` as a file path, or as inline JSON when it starts with `{`.
fn read_input(input: &str) -> anyhow::Result<Value> {
    let text = if input.trim_start().starts_with('{') {
        input.to_string()
    } else {
        std::fs::read_to_string(input).with_context(|| format!("reading {input}"))?
    };
    serde_json::from_str(&text).context("parsing input JSON")
}

fn load(c: &Common) -> anyhow::Result<Params> {
    Params::from_value(c.model, read_input(&c.input)?)
}

fn lift(e: Error) -> Failure {
    match e {
        Error::RejectsUnstable(kind) => Failure::Unstable(format!("stability class {kind:?}")),
        other => Failure::Input(other.into()),
    }
}

#[derive(Serialize)]
struct AnalyzeReport<'a> {
    params: Params,
    #[serde(flatten)]
    analysis: &'a LdAnalysis,
}

const ANALYSIS_HEADER: &str = "regime,rate,beta,cascade_height,theta_b1,theta_b2,theta_j1,theta_j2,theta_c1,theta_c2";

fn analysis_fields(a: &LdAnalysis) -> String {
    let h = (a.cascade_height > 0.0).then_some(a.cascade_height);
    [
        a.regime.to_string(),
        num(a.rate),
        num(a.beta),
        opt(h),
        num(a.theta_b.theta1),
        num(a.theta_b.theta2),
        num(a.theta_j.theta1),
        num(a.theta_j.theta2),
        opt(h.map(|_| a.theta_c.theta1)),
        opt(h.map(|_| a.theta_c.theta2)),
    ]
    .join(",")
}

pub fn analyze(c: &Common) -> Result<(), Failure> {
    let params = load(c)?;
    let a = params.analyze().map_err(lift)?;
    let text = match c.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&AnalyzeReport {
            params,
            analysis: &a,
        })?,
        Format::Csv => format!("{ANALYSIS_HEADER}\n{}\n", analysis_fields(&a)),
    };
    emit(c.output.as_deref(), &text)?;
    Ok(())
}

#[derive(Serialize)]
struct VerifyRow {
    family: &'static str,
    analytic: Option<f64>,
    oracle: f64,
    gap: Option<f64>,
    kkt_residual: Option<f64>,
}

impl VerifyRow {
    fn new(family: &'static str, analytic: Option<f64>, oracle: f64, kkt: Option<f64>) -> Self {
        Self {
            family,
            analytic,
            oracle,
            gap: analytic.map(|a| (a - oracle).abs()),
            kkt_residual: kkt,
        }
    }
}

fn verify_rows(params: &Params) -> Result<Vec<VerifyRow>, Failure> {
    let a = params.analyze().map_err(lift)?;
    let m = params.mgfs().map_err(lift)?;
    let int = min_interior_action(&m.interior).map_err(lift)?;
    let mix = min_mixture_action(&m.interior, &m.x_boundary).map_err(lift)?;
    let mut rows = vec![
        VerifyRow::new(
            "interior",
            Some(a.interior_point.unwrap_or(a.theta_b).theta1),
            int.value,
            kkt_interior(&m.interior, int.argmin).ok(),
        ),
        VerifyRow::new(
            "x_mixture",
            Some(a.theta_j.theta1),
            mix.value,
            kkt_mixture(&m.interior, &m.x_boundary, &mix.argmin).ok(),
        ),
    ];
    let mut best = int.value.min(mix.value);
    // Without a y-axis mixture optimum the cascade family is empty.
    if let Ok(climb) = y_climb_cost(&m.interior, &m.y_boundary) {
        rows.push(VerifyRow::new("y_climb", a.y_climb_cost, climb, None));
        let cas = min_cascade_action(&m.interior, climb).map_err(lift)?;
        let analytic = (a.cascade_height > 0.0).then_some(a.theta_c.theta1);
        rows.push(VerifyRow::new(
            "cascade",
            analytic,
            cas.value,
            kkt_cascade(&m.interior, climb, &cas.argmin).ok(),
        ));
        best = best.min(cas.value);
    }
    rows.push(VerifyRow::new("rate", Some(a.rate), best, None));
    Ok(rows)
}

pub fn verify(c: &Common) -> Result<(), Failure> {
    let params = load(c)?;
    let rows = verify_rows(&params)?;
    let text = match c.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&rows)?,
        Format::Csv => {
            let mut s = String::from("family,analytic,oracle,gap,kkt_residual\n");
            for r in &rows {
                writeln!(
                    s,
                    "{},{},{},{},{}",
                    r.family,
                    opt(r.analytic),
                    num(r.oracle),
                    opt(r.gap),
                    opt(r.kkt_residual)
                )
                .unwrap();
            }
            s
        }
    };
    emit(c.output.as_deref(), &text)?;
    match rows.iter().find(|r| r.gap.is_some_and(|g| g.is_nan() || g > VERIFY_TOL)) {
        Some(r) => Err(Failure::Gap(format!(
            "{} gap {:e} exceeds {VERIFY_TOL:e}",
            r.family,
            r.gap.unwrap_or(f64::NAN)
        ))),
        None => Ok(()),
    }
}

fn parse_levels(s: &str) -> anyhow::Result<Vec<u32>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().with_context(|| format!("bad level {t:?}")))
        .collect()
}

pub fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let c = &args.common;
    let params = load(c)?;
    let levels = parse_levels(&args.levels)?;
    let format = c.format.unwrap_or(Format::Csv);
    if levels.is_empty() {
        let text = match format {
            Format::Csv => format!("{}\n", mjn_core::sim::CSV_HEADER),
            Format::Json => "[]\n".to_string(),
        };
        emit(c.output.as_deref(), &text)?;
        return Ok(());
    }
    let mut cfg = SimConfig::new(args.seed, levels, args.cycles);
    cfg.max_events = args.max_events;
    cfg.drift_cycles = args.drift_cycles;
    if let Some(effort) = args.splitting.filter(|&e| e > 0) {
        cfg = cfg.with_splitting(effort);
    }
    cfg.validate().map_err(|e| Failure::Input(e.into()))?;
    let model = params.walk().map_err(lift)?;
    let est = estimate_overflow(&model, &cfg).map_err(lift)?;
    match format {
        Format::Csv => {
            emit(c.output.as_deref(), &est.to_csv())?;
            // The CSV carries the per-level rows; the fit and diagnostics go
            // to a summary next to it.
            if let Some(out) = &c.output {
                let summary = out.with_extension("summary.json");
                emit(Some(&summary), &to_json(&est)?)?;
            }
        }
        Format::Json => emit(c.output.as_deref(), &to_json(&est)?)?,
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
struct Axis {
    name: String,
    values: Vec<f64>,
}

/// Parses `name=start:stop:step` with an inclusive stop.
fn parse_grid(spec: &str) -> anyhow::Result<Axis> {
    let (name, range) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("grid {spec:?} is not name=start:stop:step"))?;
    let parts: Vec<f64> = range
        .split(':')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("grid {spec:?}"))?;
    let [start, stop, step] = parts[..] else {
        bail!("grid {spec:?} needs start:stop:step");
    };
    if !(start.is_finite() && stop.is_finite() && step > 0.0 && stop >= start) {
        bail!("grid {spec:?} needs finite start <= stop and step > 0");
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if n > 10_000_000 {
        bail!("grid {spec:?} has {n} points");
    }
    Ok(Axis {
        name: name.trim().to_string(),
        values: (0..n).map(|i| start + i as f64 * step).collect(),
    })
}

fn product(axes: &[Axis]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

#[derive(Serialize)]
struct SweepRow {
    point: Vec<f64>,
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    analysis: Option<LdAnalysis>,
}

pub fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    let c = &args.common;
    let base = read_input(&c.input)?;
    let Value::Object(base) = base else {
        return Err(anyhow!("input must be a JSON object").into());
    };
    let axes: Vec<Axis> = args
        .grid
        .iter()
        .map(|g| parse_grid(g))
        .collect::<anyhow::Result<_>>()?;
    for a in &axes {
        if !base.contains_key(&a.name) {
            return Err(anyhow!("unknown grid parameter {:?}", a.name).into());
        }
    }
    let points = product(&axes);
    let rows: Vec<SweepRow> = points
        .into_par_iter()
        .map(|point| {
            let mut obj = base.clone();
            for (axis, &v) in axes.iter().zip(&point) {
                obj.insert(axis.name.clone(), v.into());
            }
            let (status, analysis) = match Params::from_value(c.model, Value::Object(obj)) {
                Err(_) => ("invalid".to_string(), None),
                Ok(p) => match p.analyze() {
                    Ok(a) => ("ok".to_string(), Some(a)),
                    Err(Error::RejectsUnstable(kind)) => (format!("{kind:?}"), None),
                    Err(e) => (format!("error: {e}").replace(',', ";"), None),
                },
            };
            SweepRow {
                point,
                status,
                analysis,
            }
        })
        .collect();

    report_transitions(&axes, &rows);
    let text = match c.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&rows)?,
        Format::Csv => {
            let names: Vec<&str> = axes.iter().map(|a| a.name.as_str()).collect();
            let mut s = format!("{},status,{ANALYSIS_HEADER}\n", names.join(","));
            let empty = ",".repeat(ANALYSIS_HEADER.matches(',').count());
            for r in &rows {
                let vals: Vec<String> = r.point.iter().map(|&v| fmt_f64(v)).collect();
                let fields = r.analysis.as_ref().map(analysis_fields).unwrap_or_else(|| empty.clone());
                writeln!(s, "{},{},{}", vals.join(","), r.status, fields).unwrap();
            }
            s
        }
    };
    emit(c.output.as_deref(), &text)?;
    Ok(())
}

/// Notes every regime change between grid neighbours along each axis.
fn report_transitions(axes: &[Axis], rows: &[SweepRow]) {
    let mut stride = 1;
    for (k, axis) in axes.iter().enumerate().rev() {
        let n = axis.values.len();
        for i in 0..rows.len() {
            if (i / stride) % n + 1 == n {
                continue;
            }
            let (r0, r1) = (&rows[i], &rows[i + stride]);
            if let (Some(a), Some(b)) = (&r0.analysis, &r1.analysis) {
                if a.regime != b.regime {
                    eprintln!(
                        "regime change {} -> {} along {} between {} and {} at {:?}",
                        a.regime, b.regime, axis.name, r0.point[k], r1.point[k], r0.point
                    );
                }
            }
        }
        stride *= n;
    }
}

pub fn path(c: &Common) -> Result<(), Failure> {
    let value = read_input(&c.input)?;
    let analysis: LdAnalysis = if value.get("regime").is_some() {
        serde_json::from_value(value).context("parsing analysis JSON")?
    } else {
        Params::from_value(c.model, value)?.analyze().map_err(lift)?
    };
    let fp = fluid_path(&analysis).map_err(lift)?;
    let text = match c.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&fp)?,
        Format::Csv => {
            let mut s = String::from("x,y,segment_id,annotation\n");
            for seg in &fp.segments {
                let mut note = format!("{:?}", seg.kind);
                if let Some(v) = seg.velocity {
                    write!(note, " v=({:.6};{:.6})", v[0], v[1]).unwrap();
                }
                if let Some(b) = seg.beta {
                    write!(note, " beta={b:.6}").unwrap();
                }
                for p in [seg.start, seg.end] {
                    writeln!(s, "{},{},{},{}", num(p[0]), num(p[1]), seg.id, note).unwrap();
                }
            }
            s
        }
    };
    emit(c.output.as_deref(), &text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_inclusive() {
        let a = parse_grid("mu1_star=1.0:3.0:0.5").unwrap();
        assert_eq!(a.name, "mu1_star");
        assert_eq!(a.values.len(), 5);
        assert!((a.values[4] - 3.0).abs() < 1e-12);
        assert!(parse_grid("mu1_star=1:0:0.1").is_err());
        assert!(parse_grid("mu1_star=1:2").is_err());
    }

    #[test]
    fn product_orders_last_axis_fastest() {
        let axes = [
            Axis { name: "a".into(), values: vec![0.0, 1.0] },
            Axis { name: "b".into(), values: vec![5.0, 6.0, 7.0] },
        ];
        let p = product(&axes);
        assert_eq!(p.len(), 6);
        assert_eq!(p[1], vec![0.0, 6.0]);
        assert_eq!(p[3], vec![1.0, 5.0]);
    }

    #[test]
    fn levels_parse() {
        assert_eq!(parse_levels("4, 8,12").unwrap(), vec![4, 8, 12]);
        assert!(parse_levels("").unwrap().is_empty());
        assert!(parse_levels("4,x").is_err());
    }
}
