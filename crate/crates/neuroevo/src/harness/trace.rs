//! Convergence traces: rows of (eval_count, best_error) plus classification
//! error rates under validation gating, persisted as delimited text.

use std::io::{BufRead, Write};

use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub eval_count: u64,
    pub best_error: f64,
    /// (train_error_rate, test_error_rate), classification only.
    pub rates: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub classification: bool,
    pub rows: Vec<TraceRow>,
}

impl ConvergenceTrace {
    pub fn new(classification: bool) -> Self {
        ConvergenceTrace { classification, rows: Vec::new() }
    }

    /// Appends a row; eval counts must strictly increase and best errors must
    /// never increase.
    pub fn record(&mut self, eval_count: u64, best_error: f64, rates: Option<(f64, f64)>) -> Result<()> {
        contract!(
            rates.is_some() == self.classification,
            "classification rates presence must match trace kind"
        );
        if let Some(last) = self.rows.last() {
            contract!(
                eval_count > last.eval_count,
                "eval counts must strictly increase: {} after {}",
                eval_count,
                last.eval_count
            );
            contract!(
                best_error <= last.best_error,
                "best error must not increase: {best_error} after {}",
                last.best_error
            );
        }
        self.rows.push(TraceRow { eval_count, best_error, rates });
        Ok(())
    }

    /// The sample that enters the statistics: final best training error for
    /// regression and autoencoding, final gated test error rate for
    /// classification.
    pub fn final_error(&self) -> Option<f64> {
        let last = self.rows.last()?;
        Some(match last.rates {
            Some((_, test_rate)) => test_rate,
            None => last.best_error,
        })
    }
}

pub fn write_trace<W: Write>(trace: &ConvergenceTrace, out: &mut W) -> std::io::Result<()> {
    if trace.classification {
        writeln!(out, "eval_count,best_error,train_err_rate,test_err_rate")?;
        for r in &trace.rows {
            let (tr, te) = r.rates.expect("classification row has rates");
            writeln!(out, "{},{:e},{:e},{:e}", r.eval_count, r.best_error, tr, te)?;
        }
    } else {
        writeln!(out, "eval_count,best_error")?;
        for r in &trace.rows {
            writeln!(out, "{},{:e}", r.eval_count, r.best_error)?;
        }
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(input: R) -> Result<ConvergenceTrace> {
    let mut lines = input.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "empty trace file".into() })?;
    let header = header?;
    let classification = match header.trim() {
        "eval_count,best_error" => false,
        "eval_count,best_error,train_err_rate,test_err_rate" => true,
        other => {
            return Err(Error::Parse { line: 1, msg: format!("unrecognized header '{other}'") })
        }
    };
    let mut trace = ConvergenceTrace::new(classification);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expect = if classification { 4 } else { 2 };
        if fields.len() != expect {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {expect} fields, got {}", fields.len()),
            });
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad {what} '{s}'"),
            })
        };
        let eval_count = fields[0].trim().parse::<u64>().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad eval count '{}'", fields[0]),
        })?;
        let best_error = num(fields[1], "error")?;
        let rates = if classification {
            Some((num(fields[2], "train rate")?, num(fields[3], "test rate")?))
        } else {
            None
        };
        trace.record(eval_count, best_error, rates).map_err(|e| Error::Parse {
            line: line_no,
            msg: format!("invalid trace row: {e}"),
        })?;
    }
    Ok(trace)
}
