//! Command implementations. Every pipeline returns its JSON payload, an
//! optional CSV table, and any extra files to drop into the output
//! directory; the caller wraps the payload in the report envelope.

use nalgebra::DVector;
use rand::Rng as _;
use rayon::prelude::*;
use serde_json::json;

use stocycle::accessibility::{access, Constants};
use stocycle::base::{BasePoint, BaseSystem};
use stocycle::cocycle::{Anchor, CocycleSpec, Generator};
use stocycle::domination::{certify_oseledets, contracting_case};
use stocycle::linalg::{random_stochastic, ProjectionPair, RowProfile};
use stocycle::lyapunov::{lyapunov_periodic, lyapunov_qr, QrOptions};
use stocycle::perturbation::{exponent_shift_check, phi};
use stocycle::transfer::{analyze_ruelle, RuelleOptions};

use crate::config::{
    resolve_family, resolve_point, resolve_spec, AccessConfig, ClassifyConfig, DominateConfig,
    GenConfig, LyapConfig, PerturbConfig, ProfileConfig, RuelleConfig, RunConfig,
};
use crate::report::{fmt_rate, rate_json, sha256_hex, Csv};
use crate::CliError;

/// Everything a pipeline produces.
pub struct RunOutput {
    pub result: serde_json::Value,
    pub csv: Option<Csv>,
    /// Extra artifacts (name, bytes) for the output directory.
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: String,
}

pub fn dispatch(cfg: &RunConfig, seed: u64) -> Result<RunOutput, CliError> {
    match cfg {
        RunConfig::Gen(c) => run_gen(c, seed),
        RunConfig::Lyap(c) => run_lyap(c),
        RunConfig::Dominate(c) => run_dominate(c),
        RunConfig::Perturb(c) => run_perturb(c),
        RunConfig::Access(c) => run_access(c, seed),
        RunConfig::Ruelle(c) => run_ruelle(c),
        RunConfig::Classify(c) => run_classify(c, seed),
    }
}

/// Stream-splits the run seed so items are independent of thread
/// scheduling and of each other.
fn item_rng(seed: u64, index: u64) -> stocycle::Rng {
    stocycle::seeded_rng(seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn require(cond: bool, reason: &str) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::validation(reason))
    }
}

fn run_gen(cfg: &GenConfig, seed: u64) -> Result<RunOutput, CliError> {
    require(cfg.count > 0, "count must be positive")?;
    require(cfg.n >= 2, "n must be at least 2")?;
    let base = cfg.base.clone().unwrap_or_else(|| BaseSystem::cycle(1));
    base.validate().map_err(CliError::from)?;
    let prefix = cfg.prefix.clone().unwrap_or_else(|| "spec".to_string());
    require(
        !prefix.is_empty() && !prefix.contains(['/', '\\']),
        "prefix must be a bare file stem",
    )?;
    if cfg.anchors.is_some() && !matches!(base, BaseSystem::Rotation { .. }) {
        return Err(CliError::validation("anchors need a rotation base"));
    }
    if let Some(k) = cfg.anchors {
        require(k >= 2, "anchors must be at least 2")?;
    }
    let profile_cfg = cfg.profile.unwrap_or(ProfileConfig::Uniform);

    let specs: Vec<CocycleSpec> = (0..cfg.count)
        .into_par_iter()
        .map(|i| -> Result<CocycleSpec, CliError> {
            let mut rng = item_rng(seed, i as u64);
            let draw = |rng: &mut stocycle::Rng| -> stocycle::StochasticMatrix {
                random_stochastic(cfg.n, rng, profile_cfg.to_profile())
            };
            let generator = if let Some(k) = cfg.anchors {
                let anchors = (0..k)
                    .map(|j| Anchor { t: j as f64 / k as f64, matrix: draw(&mut rng) })
                    .collect();
                Generator::Interpolated { anchors }
            } else {
                match base.period() {
                    Some(q) => Generator::Tabulated {
                        matrices: (0..q).map(|_| draw(&mut rng)).collect(),
                    },
                    None => Generator::Constant { matrix: draw(&mut rng) },
                }
            };
            CocycleSpec::new(base.clone(), generator).map_err(CliError::from)
        })
        .collect::<Result<_, _>>()?;

    let width = cfg.count.saturating_sub(1).to_string().len().max(3);
    let mut files = Vec::with_capacity(specs.len());
    let mut rows = Vec::with_capacity(specs.len());
    let mut csv = Csv::new("index,file,dobrushin");
    for (i, spec) in specs.iter().enumerate() {
        let name = format!("{prefix}_{i:0width$}.json");
        let mut bytes = serde_json::to_vec_pretty(spec)
            .map_err(|e| CliError::validation(format!("spec serialization: {e}")))?;
        bytes.push(b'\n');
        let dobrushin = spec
            .value_at(&base.origin())
            .map_err(CliError::from)?
            .dobrushin_coefficient();
        rows.push(json!({
            "index": i,
            "file": name,
            "n": cfg.n,
            "sha256": sha256_hex(&bytes),
            "dobrushin_at_origin": dobrushin,
        }));
        csv.push(format!("{i},{name},{}", fmt_rate(dobrushin)));
        files.push((name, bytes));
    }
    Ok(RunOutput {
        result: json!({ "count": cfg.count, "n": cfg.n, "specs": rows }),
        csv: Some(csv),
        files,
        summary: format!("generated {} spec files", cfg.count),
    })
}

fn run_lyap(cfg: &LyapConfig) -> Result<RunOutput, CliError> {
    let c = resolve_spec(&cfg.spec, &cfg.spec_path)?;
    let x = resolve_point(c.base(), &cfg.point)?;
    let report = if c.base().period().is_some() {
        lyapunov_periodic(&c, &x)?.0
    } else if let Generator::Constant { matrix } = c.generator() {
        // A constant generator has exact rates regardless of the base:
        // compute them on a synthetic one-point cycle.
        let synthetic = CocycleSpec::constant(BaseSystem::cycle(1), matrix.clone())?;
        lyapunov_periodic(&synthetic, &BasePoint::Cycle(0))?.0
    } else {
        let len = cfg.len.unwrap_or(20_000);
        let stride = cfg.stride.unwrap_or(1);
        lyapunov_qr(&c, &x, len, stride, &QrOptions::default())?
    };
    let mut csv = Csv::new("index,value,multiplicity");
    for (i, e) in report.exponents.iter().enumerate() {
        csv.push(format!("{i},{},{}", fmt_rate(e.value), e.multiplicity));
    }
    let points = report.exponents.len();
    Ok(RunOutput {
        result: json!({
            "method": serde_json::to_value(&report.method)
                .map_err(|e| CliError::validation(e.to_string()))?,
            "exponents": report.exponents,
            "warning": report.warning,
        }),
        csv: Some(csv),
        files: Vec::new(),
        summary: format!("{points} spectrum point(s)"),
    })
}

fn run_dominate(cfg: &DominateConfig) -> Result<RunOutput, CliError> {
    let c = resolve_spec(&cfg.spec, &cfg.spec_path)?;
    let x = resolve_point(c.base(), &cfg.point)?;
    let len = cfg.len.unwrap_or(64);
    require(len > 0, "len must be positive")?;
    let (_, cert) = contracting_case(&c, &x, len)?;
    let mut csv = Csv::new("m,worst_ratio,points");
    csv.push(format!(
        "{},{},{}",
        cert.m,
        fmt_rate(cert.worst_ratio),
        cert.per_point_ratios.len()
    ));
    let summary = format!("certified at m = {} with worst ratio {:.6}", cert.m, cert.worst_ratio);
    Ok(RunOutput {
        result: json!({ "certificate": serde_json::to_value(&cert)
            .map_err(|e| CliError::validation(e.to_string()))? }),
        csv: Some(csv),
        files: Vec::new(),
        summary,
    })
}

fn run_perturb(cfg: &PerturbConfig) -> Result<RunOutput, CliError> {
    let c = resolve_spec(&cfg.spec, &cfg.spec_path)?;
    require(
        c.base().period().is_some(),
        "perturb sweeps compare exact rates and need a periodic base",
    )?;
    let x = resolve_point(c.base(), &cfg.point)?;
    let rhos = cfg
        .rhos
        .clone()
        .unwrap_or_else(|| (1..=9).map(|k| k as f64 / 10.0).collect());
    require(!rhos.is_empty(), "rhos must be non-empty")?;
    for &rho in &rhos {
        require(rho > 0.0 && rho < 1.0, "each rho must lie strictly between 0 and 1")?;
    }
    let v = match &cfg.vector {
        Some(entries) => {
            require(entries.len() == c.n(), "vector length must match the spec dimension")?;
            DVector::from_column_slice(entries)
        }
        None => {
            let mut e = DVector::zeros(c.n());
            e[0] = 1.0;
            e
        }
    };
    let s_at_x = c.value_at(&x)?;

    let entries: Vec<(serde_json::Value, String, f64)> = rhos
        .par_iter()
        .map(|&rho| -> Result<_, CliError> {
            let table = exponent_shift_check(&c, &x, rho)?;
            let lead = table.rows.first().copied();
            let phi_v = phi(&s_at_x, rho, &v)?;
            let phi_defect = (&phi_v - &v).norm();
            let (lambda_hat, expected) = match lead {
                Some(row) => (row.observed, row.expected),
                None => (f64::NAN, f64::NAN),
            };
            let row_json = json!({
                "rho": rho,
                "lambda_hat": rate_json(lambda_hat),
                "expected_lambda_hat": rate_json(expected),
                "top_rate": rate_json(table.top_rate),
                "max_shift_defect": table.max_defect,
                "phi_defect": phi_defect,
            });
            let csv_row = format!(
                "{},{},{},{}",
                fmt_rate(rho),
                fmt_rate(lambda_hat),
                fmt_rate(phi_defect),
                fmt_rate(table.max_defect)
            );
            Ok((row_json, csv_row, table.max_defect))
        })
        .collect::<Result<_, _>>()?;

    let mut csv = Csv::new("rho,lambda_hat,phi_defect,shift_defect");
    let mut rows = Vec::with_capacity(entries.len());
    let mut worst = 0.0f64;
    for (row_json, csv_row, defect) in entries {
        rows.push(row_json);
        csv.push(csv_row);
        worst = worst.max(defect);
    }
    Ok(RunOutput {
        result: json!({ "rows": rows, "worst_shift_defect": worst }),
        csv: Some(csv),
        files: Vec::new(),
        summary: format!("swept {} deformation value(s), worst shift defect {worst:.3e}", rows.len()),
    })
}

/// Unit zero-sum direction drawn through the normal coordinates.
fn random_direction(proj: &ProjectionPair, rng: &mut stocycle::Rng) -> DVector<f64> {
    let d = proj.n() - 1;
    loop {
        let raw = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let norm = raw.norm();
        if norm > 1e-9 {
            return proj.normal_to_ambient(&(raw / norm));
        }
    }
}

fn run_access(cfg: &AccessConfig, seed: u64) -> Result<RunOutput, CliError> {
    require(cfg.count > 0, "count must be positive")?;
    require(cfg.n >= 2, "n must be at least 2")?;
    let k = Constants::new(cfg.n)?;
    let eps = cfg.epsilon.unwrap_or(0.5 / (k.c * k.c));
    require(eps > 0.0 && eps <= 1.0, "epsilon must lie in (0, 1]")?;
    let budget = k.angle_budget(eps);

    let rows: Vec<serde_json::Value> = (0..cfg.count)
        .into_par_iter()
        .map(|i| -> Result<serde_json::Value, CliError> {
            let mut rng = item_rng(seed, i as u64);
            let proj = ProjectionPair::new(cfg.n);
            let s = random_stochastic(cfg.n, &mut rng, RowProfile::Uniform);
            let x = random_direction(&proj, &mut rng);
            let y = if cfg.n == 2 {
                // The zero-sum line is one-dimensional: only the
                // antipodal pair is available.
                if rng.random::<f64>() < 0.5 {
                    x.clone()
                } else {
                    -&x
                }
            } else {
                let w = loop {
                    let cand = random_direction(&proj, &mut rng);
                    let rejected = &cand - &x * x.dot(&cand);
                    let norm = rejected.norm();
                    if norm > 1e-6 {
                        break rejected / norm;
                    }
                };
                let theta = budget * rng.random::<f64>();
                let rotated = &x * theta.cos() + w * theta.sin();
                if rng.random::<f64>() < 0.5 {
                    rotated
                } else {
                    -rotated
                }
            };
            let res = access(&s, &x, &y, eps)?;
            Ok(json!({
                "index": i,
                "angle": res.angle,
                "lambda": res.lambda,
                "t": res.transport.t,
                "norm_gap": res.norm_gap,
                "residual": res.composition_residual,
            }))
        })
        .collect::<Result<_, _>>()?;

    let pick = |key: &str| -> Vec<f64> {
        rows.iter().filter_map(|r| r[key].as_f64()).collect()
    };
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let gaps = pick("norm_gap");
    let residuals = pick("residual");
    let ts = pick("t");

    let mut csv = Csv::new("index,angle,lambda,t,norm_gap,residual");
    for r in &rows {
        csv.push(format!(
            "{},{},{},{},{},{}",
            r["index"],
            fmt_rate(r["angle"].as_f64().unwrap_or(f64::NAN)),
            fmt_rate(r["lambda"].as_f64().unwrap_or(f64::NAN)),
            fmt_rate(r["t"].as_f64().unwrap_or(f64::NAN)),
            fmt_rate(r["norm_gap"].as_f64().unwrap_or(f64::NAN)),
            fmt_rate(r["residual"].as_f64().unwrap_or(f64::NAN)),
        ));
    }
    Ok(RunOutput {
        result: json!({
            "count": cfg.count,
            "epsilon": eps,
            "angle_budget": budget,
            "max_norm_gap": max(&gaps),
            "max_residual": max(&residuals),
            "min_t": min(&ts),
            "instances": rows,
        }),
        csv: Some(csv),
        files: Vec::new(),
        summary: format!(
            "redirected {} instance(s); worst norm gap {:.3e} within budget {:.3e}",
            cfg.count,
            max(&gaps),
            eps
        ),
    })
}

fn run_ruelle(cfg: &RuelleConfig) -> Result<RunOutput, CliError> {
    let pf = resolve_family(&cfg.family, &cfg.family_path)?;
    let x = resolve_point(pf.base(), &cfg.point)?;
    let defaults = RuelleOptions::default();
    let opts = RuelleOptions {
        orbit_len: cfg.orbit_len.unwrap_or(defaults.orbit_len),
        m_max: cfg.m_max.unwrap_or(defaults.m_max),
        pullback_depth: cfg.pullback_depth.unwrap_or(defaults.pullback_depth),
    };
    let report = analyze_ruelle(&pf, &x, &opts)?;
    let mut csv = Csv::new("index,value,multiplicity");
    for (i, e) in report.exponents.iter().enumerate() {
        csv.push(format!("{i},{},{}", fmt_rate(e.value), e.multiplicity));
    }
    let summary = format!(
        "{} spectrum point(s); certificate {}",
        report.spectrum_points,
        if report.certificate.is_some() { "found" } else { "absent" }
    );
    Ok(RunOutput {
        result: serde_json::to_value(&report)
            .map_err(|e| CliError::validation(e.to_string()))?,
        csv: Some(csv),
        files: Vec::new(),
        summary,
    })
}

fn run_classify(cfg: &ClassifyConfig, seed: u64) -> Result<RunOutput, CliError> {
    require(cfg.count > 0, "count must be positive")?;
    require(cfg.n >= 2, "n must be at least 2")?;
    let q = cfg.period.unwrap_or(1);
    require(q >= 1, "period must be at least 1")?;
    let m_max = cfg.m_max.unwrap_or(64);
    let profile_cfg = cfg.profile.unwrap_or(ProfileConfig::Uniform);

    struct Row {
        index: usize,
        spectrum_points: usize,
        bucket: &'static str,
        certificate_m: Option<usize>,
        note: Option<String>,
        exponents: Vec<stocycle::Exponent>,
    }

    let rows: Vec<Row> = (0..cfg.count)
        .into_par_iter()
        .map(|i| -> Result<Row, CliError> {
            let mut rng = item_rng(seed, i as u64);
            let matrices = (0..q)
                .map(|_| random_stochastic(cfg.n, &mut rng, profile_cfg.to_profile()))
                .collect();
            let c = CocycleSpec::new(BaseSystem::cycle(q), Generator::Tabulated { matrices })?;
            let x = BasePoint::Cycle(0);
            let (report, _) = lyapunov_periodic(&c, &x)?;
            let points = report.exponents.len();
            let (bucket, certificate_m, note) = match points {
                1 => ("trivial", None, None),
                2 => ("two_point", None, None),
                _ => match certify_oseledets(&c, &x, m_max) {
                    Ok(cert) => ("multi_point_dominated", Some(cert.m), None),
                    Err(e) => ("multi_point_uncertified", None, Some(e.to_string())),
                },
            };
            Ok(Row {
                index: i,
                spectrum_points: points,
                bucket,
                certificate_m,
                note,
                exponents: report.exponents,
            })
        })
        .collect::<Result<_, _>>()?;

    let count_bucket = |name: &str| rows.iter().filter(|r| r.bucket == name).count();
    let histogram = json!({
        "trivial": count_bucket("trivial"),
        "two_point": count_bucket("two_point"),
        "multi_point_dominated": count_bucket("multi_point_dominated"),
        "multi_point_uncertified": count_bucket("multi_point_uncertified"),
    });
    let mut point_counts = std::collections::BTreeMap::new();
    for r in &rows {
        *point_counts.entry(r.spectrum_points).or_insert(0usize) += 1;
    }
    let spectrum_point_counts: Vec<serde_json::Value> = point_counts
        .iter()
        .map(|(points, count)| json!({ "points": points, "count": count }))
        .collect();

    let mut csv = Csv::new("index,spectrum_points,bucket");
    let spec_rows: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            csv.push(format!("{},{},{}", r.index, r.spectrum_points, r.bucket));
            json!({
                "index": r.index,
                "spectrum_points": r.spectrum_points,
                "bucket": r.bucket,
                "certificate_m": r.certificate_m,
                "note": r.note,
                "exponents": r.exponents,
            })
        })
        .collect();

    let summary = format!(
        "classified {} spec(s): {histogram}",
        cfg.count
    );
    Ok(RunOutput {
        result: json!({
            "empirical": true,
            "count": cfg.count,
            "n": cfg.n,
            "period": q,
            "m_max": m_max,
            "histogram": histogram,
            "spectrum_point_counts": spectrum_point_counts,
            "specs": spec_rows,
        }),
        csv: Some(csv),
        files: Vec::new(),
        summary,
    })
}
