//! CSV export and import of IMCs and their labels.

use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::{Imc, Label, LabelSet, TransitionBound};

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Input(format!("{other:?}")),
    }
}

/// Writes `from,to,lower,upper` rows sorted by `(from, to)`.
pub fn write_imc<W: Write>(imc: &Imc, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["from", "to", "lower", "upper"]).map_err(csv_err)?;
    for row in imc.rows() {
        for t in row {
            w.write_record([
                t.from.to_string(),
                t.to.to_string(),
                t.lower.to_string(),
                t.upper.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes one `state,label` row per label held by a state.
pub fn write_labels<W: Write>(imc: &Imc, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state", "label"]).map_err(csv_err)?;
    for (q, set) in imc.label_sets().iter().enumerate() {
        for l in set.iter() {
            w.write_record([q.to_string(), l.as_str().to_string()]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels<R: Read>(input: R, states: usize) -> Result<Vec<LabelSet>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = vec![LabelSet::new(); states];
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let (Some(q), Some(l)) = (rec.get(0), rec.get(1)) else {
            return Err(Error::Input(format!("label file line {}: expected state,label", n + 2)));
        };
        let q: usize = q
            .parse()
            .map_err(|_| Error::Input(format!("label file line {}: bad state `{q}`", n + 2)))?;
        if q >= states {
            return Err(Error::Input(format!(
                "label file line {}: state {q} outside 0..{states}",
                n + 2
            )));
        }
        out[q].insert(l.parse::<Label>()?);
    }
    Ok(out)
}

/// Reads an exported IMC back; the state count is one past the largest
/// index seen. The result is fully validated.
pub fn read_imc<R: Read, L: Read>(input: R, labels: L) -> Result<Imc> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut entries = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 4 {
            return Err(Error::Input(format!("imc file line {}: expected 4 columns", n + 2)));
        }
        let bad = |what: &str| Error::Input(format!("imc file line {}: bad {what}", n + 2));
        entries.push(TransitionBound {
            from: rec[0].parse().map_err(|_| bad("from"))?,
            to: rec[1].parse().map_err(|_| bad("to"))?,
            lower: rec[2].parse().map_err(|_| bad("lower"))?,
            upper: rec[3].parse().map_err(|_| bad("upper"))?,
        });
    }
    let states = entries
        .iter()
        .map(|t| t.from.max(t.to) + 1)
        .max()
        .ok_or_else(|| Error::Input("imc file has no transitions".into()))?;
    let mut rows = vec![Vec::new(); states];
    for t in entries {
        rows[t.from].push(t);
    }
    let labels = read_labels(labels, states)?;
    Imc::new(rows, labels)
}
