use std::path::Path;

use nv0_core::fitting::{
    extract_cpmg, extract_oder, extract_rabi, extract_ramsey, extract_t1, fit_auto, FitData,
    FitModel, FitResult,
};

use crate::error::CliError;
use crate::output::emit;
use crate::FitArgs;

/// x, y and optional sigma columns from CSV text. A leading non-numeric row
/// is a header; `#` lines are comments. Count traces (header `t_s,counts,sigma`)
/// get their sigma floored at one count.
pub fn parse_table(text: &str) -> Result<FitData, CliError> {
    let mut header: Option<Vec<String>> = None;
    let mut width: Option<usize> = None;
    let (mut x, mut y, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for (idx, raw) in text.lines().enumerate() {
        let row = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let numbers: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let numbers = match numbers {
            Ok(v) => v,
            Err(_) if header.is_none() && width.is_none() => {
                header = Some(fields.iter().map(|f| f.to_string()).collect());
                width = Some(fields.len());
                continue;
            }
            Err(e) => {
                let col = fields.iter().position(|f| f.parse::<f64>().is_err()).unwrap_or(0) + 1;
                return Err(CliError::Config(format!("row {row}, column {col}: {e}")));
            }
        };
        let expected = *width.get_or_insert(numbers.len());
        if !(2..=3).contains(&expected) || numbers.len() != expected {
            return Err(CliError::Config(format!(
                "row {row}: arity mismatch, expected 2 or 3 columns (x,y[,sigma]) consistently, got {}",
                numbers.len()
            )));
        }
        x.push(numbers[0]);
        y.push(numbers[1]);
        if expected == 3 {
            s.push(numbers[2]);
        }
    }
    if x.is_empty() {
        return Err(CliError::Config("no data rows".into()));
    }
    let counts = header.as_deref().is_some_and(|h| h == ["t_s", "counts", "sigma"]);
    let data = if s.is_empty() {
        FitData::unweighted(x, y)
    } else if counts {
        FitData::new(x, y, s.into_iter().map(|v| v.max(1.0)).collect())
    } else {
        FitData::new(x, y, s)
    };
    data.map_err(|e| CliError::Config(e.to_string()))
}

fn fit(data: &FitData, model: &str, t1_fixed: Option<f64>) -> Result<FitResult, CliError> {
    let res = match model {
        "t1" => extract_t1(&data.x, &data.y, &data.sigma),
        "rabi" => extract_rabi(data),
        "ramsey" => extract_ramsey(data),
        "echo" | "cpmg" => extract_cpmg(data, t1_fixed),
        "oder" => extract_oder(data),
        name => {
            let m = match name {
                "exp-recovery" => FitModel::ExpRecovery,
                "damped-cosine" => FitModel::DampedCosine,
                "detuned-damped-cosine" => FitModel::DetunedDampedCosine,
                "gaussian-peak" => FitModel::GaussianPeak,
                "echo-decay" => FitModel::EchoDecay { t1: t1_fixed },
                other => {
                    return Err(CliError::Config(format!(
                        "unknown model `{other}` (t1, rabi, ramsey, echo, oder, exp-recovery, damped-cosine, detuned-damped-cosine, gaussian-peak, echo-decay)"
                    )))
                }
            };
            fit_auto(&m, data)
        }
    };
    res.map_err(CliError::from_fit)
}

pub fn run(a: &FitArgs, output: Option<&Path>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.input)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", a.input.display())))?;
    let data = parse_table(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", a.input.display())),
        other => other,
    })?;
    if let Some(t) = a.t1_fixed {
        if !(t > 0.0) {
            return Err(CliError::Config("--t1-fixed must be > 0".into()));
        }
    }
    let res = fit(&data, &a.model, a.t1_fixed)?;
    let report = if a.csv { res.report_csv() } else { res.report_text() };
    emit(&report, output)?;
    if !res.converged {
        return Err(CliError::Fit(format!("stopped after {} iterations", res.iterations)));
    }
    Ok(())
}
