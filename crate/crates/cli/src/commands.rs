use std::path::{Path, PathBuf};

use secretary_core::evaluator::cutoff_table;
use secretary_core::format::{fmt_g12, fmt_opt};
use secretary_core::montecarlo::{simulate, SimConfig, Variant};
use secretary_core::optimizer::{
    cutoff_upper_bound, optimal_cutoff, optimal_cutoff_scan, BoundInapplicable, CutoffBound,
};
use secretary_core::sweep::{
    check_bound, fit_power_law_with, run_sweep, run_sweep_cached, write_csv, Objective, SweepCache,
};
use secretary_core::topk::{optimal_cutoff_topk, success_probability_exact};
use secretary_core::utility::default_epsilon;
use secretary_core::{QuadratureConfig, UtilityFunction};
use serde_json::{json, Value};

use crate::config::{ConfigFile, Resolver};
use crate::report::{csv_line, num, opt_num, render_json, Format, Report, RunManifest};
use crate::{Cli, CliError, Command, Cutoffs, Method, QuadArgs, DEBUG_ENV};

/// Runs a parsed command line and returns what goes to stdout.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let mut res = Resolver::new(&file);
    let format = res.resolve("format", cli.format, Format::Text)?;
    if let Some(path) = &cli.config {
        res.record("config", path.display());
    }
    let report = match cli.command {
        Command::Eval { w, n, c, quad } => eval(&mut res, &w, n, c, &quad)?,
        Command::Opt { w, n, method, quad } => opt(&mut res, &w, n, method, &quad)?,
        Command::Topk { n, k, enumerate } => topk(&mut res, n, k, enumerate)?,
        Command::Sim {
            variant,
            w,
            n,
            c,
            k,
            trials,
            seed,
        } => sim(&mut res, variant, w.as_ref(), n, c, k, trials, seed)?,
        Command::Sweep {
            objective,
            grid,
            out,
            cache,
            drop_smallest,
            slack,
            quad,
        } => {
            let args = SweepArgs {
                objective,
                grid,
                out,
                cache,
                drop_smallest,
                slack,
            };
            sweep(&mut res, args, &quad)?
        }
    };
    Ok(report.render(format))
}

fn quadrature(res: &mut Resolver, quad: &QuadArgs) -> Result<QuadratureConfig, CliError> {
    let d = QuadratureConfig::default();
    let q = QuadratureConfig {
        abs_tol: res.resolve("abs-tol", quad.abs_tol, d.abs_tol)?,
        max_depth: res.resolve("max-depth", quad.max_depth, d.max_depth)?,
        inner_sum_strategy: res.resolve("strategy", quad.strategy, d.inner_sum_strategy)?,
    };
    res.record("abs-tol", fmt_g12(q.abs_tol));
    q.validate()?;
    Ok(q)
}

fn finish(res: &mut Resolver, command: &str, seed: u64, result: Value, text: String, csv: String) -> Report {
    Report {
        manifest: RunManifest::new(command, std::mem::take(&mut res.params), seed),
        result,
        text,
        csv,
    }
}

fn dash(x: Option<f64>) -> String {
    x.map(fmt_g12).unwrap_or_else(|| "-".into())
}

fn eval(res: &mut Resolver, w: &UtilityFunction, n: usize, c: Cutoffs, quad: &QuadArgs) -> Result<Report, CliError> {
    res.record("w", w);
    res.record("n", n);
    res.record("c", c);
    let q = quadrature(res, quad)?;
    let rows = cutoff_table(w, n, &c.values(), &q)?;

    let mut text = format!("# w = {w}, n = {n}\n{:>8} {:>20} {:>20} {:>20}\n", "c", "E_c", "dE_c", "d2E_c");
    let mut csv = csv_line(&["c".into(), "E_c".into(), "dE_c".into(), "d2E_c".into()]);
    for r in &rows {
        text.push_str(&format!(
            "{:>8} {:>20} {:>20} {:>20}\n",
            r.c,
            fmt_g12(r.expected_utility),
            dash(r.delta),
            dash(r.second_delta)
        ));
        csv.push_str(&csv_line(&[
            r.c.to_string(),
            fmt_g12(r.expected_utility),
            fmt_opt(r.delta),
            fmt_opt(r.second_delta),
        ]));
    }
    let result = json!({
        "w": w.to_string(),
        "n": n,
        "rows": rows.iter().map(|r| json!({
            "c": r.c,
            "expected_utility": num(r.expected_utility),
            "delta": opt_num(r.delta),
            "second_delta": opt_num(r.second_delta),
        })).collect::<Vec<_>>(),
    });
    Ok(finish(res, "eval", 0, result, text, csv))
}

fn bound_status(bound: CutoffBound) -> &'static str {
    match bound {
        CutoffBound::Finite(_) => "finite",
        CutoffBound::Inapplicable(BoundInapplicable::UnboundedLipschitz) => "unbounded-lipschitz",
        CutoffBound::Inapplicable(BoundInapplicable::ZeroMeanGap) => "zero-mean-gap",
        CutoffBound::Inapplicable(BoundInapplicable::ZeroLipschitz) => "zero-lipschitz",
    }
}

fn opt(
    res: &mut Resolver,
    w: &UtilityFunction,
    n: usize,
    method: Option<Method>,
    quad: &QuadArgs,
) -> Result<Report, CliError> {
    res.record("w", w);
    res.record("n", n);
    let method = res.resolve("method", method, Method::Binary)?;
    let q = quadrature(res, quad)?;
    let r = match method {
        Method::Binary => optimal_cutoff(w, n, &q)?,
        Method::Scan => optimal_cutoff_scan(w, n, &q)?,
    };
    let status = bound_status(cutoff_upper_bound(w, n, default_epsilon(w))?);
    let method_name = match r.method {
        secretary_core::CutoffMethod::BinarySearch => "binary-search",
        secretary_core::CutoffMethod::FullScan => "full-scan",
    };

    let text = format!(
        "c_opt  = {}\nvalue  = {}\nmethod = {method_name}\nbound  = {} ({status})\n",
        r.c_opt,
        fmt_g12(r.value),
        dash(r.bound)
    );
    let csv = csv_line(&["c_opt".into(), "value".into(), "method".into(), "bound".into()])
        + &csv_line(&[r.c_opt.to_string(), fmt_g12(r.value), method_name.into(), fmt_opt(r.bound)]);
    let result = json!({
        "w": w.to_string(),
        "n": n,
        "c_opt": r.c_opt,
        "value": num(r.value),
        "method": method_name,
        "bound": opt_num(r.bound),
        "bound_status": status,
    });
    Ok(finish(res, "opt", 0, result, text, csv))
}

fn topk(res: &mut Resolver, n: usize, k: usize, enumerate: bool) -> Result<Report, CliError> {
    res.record("n", n);
    res.record("k", k);
    res.record("enumerate", enumerate);
    let r = optimal_cutoff_topk(n, k)?;
    let enumerated = if enumerate {
        Some(success_probability_exact(n, k, r.c_opt)?)
    } else {
        None
    };
    let fraction = r.c_opt as f64 / n as f64;

    let mut text = format!(
        "c_opt             = {}\nc_opt / n         = {}\nmodel probability = {}\nexact probability = {}\n",
        r.c_opt,
        fmt_g12(fraction),
        fmt_g12(r.model_probability),
        fmt_g12(r.exact_probability)
    );
    if let Some(p) = enumerated {
        text.push_str(&format!("enumerated        = {}\n", fmt_g12(p)));
    }
    let csv = csv_line(&[
        "n".into(),
        "k".into(),
        "c_opt".into(),
        "model_probability".into(),
        "exact_probability".into(),
        "enumerated_probability".into(),
    ]) + &csv_line(&[
        n.to_string(),
        k.to_string(),
        r.c_opt.to_string(),
        fmt_g12(r.model_probability),
        fmt_g12(r.exact_probability),
        fmt_opt(enumerated),
    ]);
    let result = json!({
        "n": n,
        "k": k,
        "c_opt": r.c_opt,
        "c_opt_fraction": num(fraction),
        "model_probability": num(r.model_probability),
        "exact_probability": num(r.exact_probability),
        "enumerated_probability": opt_num(enumerated),
    });
    Ok(finish(res, "topk", 0, result, text, csv))
}

fn debug_checks() -> bool {
    std::env::var(DEBUG_ENV)
        .map(|v| !matches!(v.trim(), "" | "0" | "false"))
        .unwrap_or(false)
}

#[allow(clippy::too_many_arguments)]
fn sim(
    res: &mut Resolver,
    variant: Variant,
    w: Option<&UtilityFunction>,
    n: usize,
    c: usize,
    k: Option<usize>,
    trials: Option<u64>,
    seed: Option<u64>,
) -> Result<Report, CliError> {
    match (variant, w, k) {
        (Variant::TopK, Some(_), _) => return Err(CliError::Usage("--w does not apply to the topk variant".into())),
        (Variant::TopK, None, None) => return Err(CliError::Usage("the topk variant needs --k".into())),
        (Variant::P1 | Variant::P2, None, _) => return Err(CliError::Usage("p1 and p2 need --w".into())),
        (Variant::P1 | Variant::P2, _, Some(_)) => {
            return Err(CliError::Usage("--k only applies to the topk variant".into()))
        }
        _ => {}
    }
    let variant_name = format!("{variant:?}").to_lowercase();
    res.record("variant", &variant_name);
    if let Some(w) = w {
        res.record("w", w);
    }
    res.record("n", n);
    res.record("c", c);
    if let Some(k) = k {
        res.record("k", k);
    }
    let trials = res.resolve("trials", trials, 100_000)?;
    let seed = res.resolve("seed", seed, 0)?;
    let debug = debug_checks();
    res.record("debug_checks", debug);
    let cfg = SimConfig {
        variant,
        n,
        c,
        k,
        trials,
        seed,
        debug_checks: debug,
    };
    let r = simulate(w, &cfg)?;

    let text = format!(
        "mean   = {}\nstderr = {}\ntrials = {}\nseed   = {}\n",
        fmt_g12(r.mean),
        fmt_g12(r.stderr),
        r.trials,
        r.seed
    );
    let csv = csv_line(&["mean".into(), "stderr".into(), "trials".into(), "seed".into()])
        + &csv_line(&[fmt_g12(r.mean), fmt_g12(r.stderr), r.trials.to_string(), r.seed.to_string()]);
    let result = json!({
        "variant": variant_name,
        "n": n,
        "c": c,
        "k": k,
        "mean": num(r.mean),
        "stderr": num(r.stderr),
        "trials": r.trials,
        "seed": r.seed,
    });
    Ok(finish(res, "sim", seed, result, text, csv))
}

struct SweepArgs {
    objective: Objective,
    grid: Option<String>,
    out: Option<PathBuf>,
    cache: Option<PathBuf>,
    drop_smallest: bool,
    slack: Option<f64>,
}

fn parse_grid(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("invalid grid value `{t}`")))
        })
        .collect()
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn sweep(res: &mut Resolver, args: SweepArgs, quad: &QuadArgs) -> Result<Report, CliError> {
    let objective = args.objective;
    res.record("objective", &objective);
    let default_grid = objective
        .default_grid()
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",");
    let grid = parse_grid(&res.resolve("grid", args.grid, default_grid)?)?;
    let drop_smallest = res.resolve("drop-smallest", args.drop_smallest.then_some(true), false)?;
    let slack = res.resolve("slack", args.slack, 2.0)?;
    let q = quadrature(res, quad)?;
    if let Some(out) = &args.out {
        res.record("out", out.display());
    }

    let records = match &args.cache {
        Some(path) => {
            let mut cache = SweepCache::load(path)?;
            let records = run_sweep_cached(&objective, &grid, &q, &mut cache)?;
            cache.save(path)?;
            records
        }
        None => run_sweep(&objective, &grid, &q)?,
    };
    let passes = check_bound(&records, slack);
    let fit = fit_power_law_with(&records, drop_smallest);

    let mut csv_bytes = Vec::new();
    write_csv(&mut csv_bytes, &records)?;
    let mut csv = String::from_utf8(csv_bytes).expect("CSV output is UTF-8");
    match &fit {
        Ok(f) => csv.push_str(&format!(
            "# exponent={}\n# log_intercept={}\n# r_squared={}\n",
            fmt_g12(f.exponent),
            fmt_g12(f.log_intercept),
            fmt_g12(f.r_squared)
        )),
        Err(e) => csv.push_str(&format!("# fit failed: {e}\n")),
    }

    let mut text = format!(
        "# {objective}\n{:>8} {:>8} {:>20} {:>20} {:>6}\n",
        "n", "c_opt", "value", "bound", "check"
    );
    for (r, ok) in records.iter().zip(&passes) {
        text.push_str(&format!(
            "{:>8} {:>8} {:>20} {:>20} {:>6}\n",
            r.n,
            r.c_opt,
            fmt_g12(r.value),
            dash(r.bound),
            if *ok { "ok" } else { "FAIL" }
        ));
    }
    match &fit {
        Ok(f) => text.push_str(&format!(
            "exponent = {}, r^2 = {}\n",
            fmt_g12(f.exponent),
            fmt_g12(f.r_squared)
        )),
        Err(e) => text.push_str(&format!("fit failed: {e}\n")),
    }

    let result = json!({
        "objective": objective.to_string(),
        "records": records.iter().zip(&passes).map(|(r, ok)| json!({
            "n": r.n,
            "c_opt": r.c_opt,
            "value": num(r.value),
            "bound": opt_num(r.bound),
            "exact_value": opt_num(r.exact_value),
            "bound_ok": ok,
        })).collect::<Vec<_>>(),
        "fit": match &fit {
            Ok(f) => json!({
                "exponent": num(f.exponent),
                "log_intercept": num(f.log_intercept),
                "r_squared": num(f.r_squared),
            }),
            Err(_) => Value::Null,
        },
        "fit_error": fit.as_ref().err().map(ToString::to_string),
    });
    let report = finish(res, "sweep", 0, result, text, csv);
    if let Some(out) = &args.out {
        write_file(out, &report.csv)?;
        write_file(&manifest_path(out), &render_json(&report.manifest, &report.result))?;
    }
    Ok(report)
}
