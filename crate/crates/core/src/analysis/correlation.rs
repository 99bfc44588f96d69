use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::corpus::{CountryCode, DocumentKey, Section, SubsetId};

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of average ranks. `NaN` marks a
/// missing value; such pairs are dropped.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = x.iter().zip(y).filter(|(a, b)| !a.is_nan() && !b.is_nan()).map(|(a, b)| (*a, *b)).unzip();
    if xs.len() < 3 {
        return Err(AnalysisError::TooFewPoints(xs.len()));
    }
    let (rx, ry) = (average_ranks(&xs), average_ranks(&ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// External target categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    Greenhouse,
    RenewableEnergy,
    PrimaryEnergy,
    FinalEnergy,
    Electricity,
}

impl Indicator {
    pub fn slug(self) -> &'static str {
        match self {
            Indicator::Greenhouse => "greenhouse",
            Indicator::RenewableEnergy => "renewable_energy",
            Indicator::PrimaryEnergy => "primary_energy",
            Indicator::FinalEnergy => "final_energy",
            Indicator::Electricity => "electricity",
        }
    }
}

/// One CSV row; an empty `value` is a missing observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRecord {
    pub country: CountryCode,
    pub indicator: Indicator,
    pub year: u16,
    pub value: Option<f64>,
}

/// Table read from a `country,indicator,year,value` CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IndicatorTable {
    pub records: Vec<IndicatorRecord>,
}

impl IndicatorTable {
    pub fn from_reader(r: impl std::io::Read) -> Result<Self, AnalysisError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = reader.headers().map_err(|e| AnalysisError::Indicators(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["country", "indicator", "year", "value"] {
            return Err(AnalysisError::Indicators(format!(
                "expected header country,indicator,year,value, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut records = Vec::new();
        let mut seen = BTreeSet::new();
        for (line, row) in reader.deserialize::<IndicatorRecord>().enumerate() {
            let rec = row.map_err(|e| AnalysisError::Indicators(format!("row {}: {e}", line + 2)))?;
            if !seen.insert((rec.country.clone(), rec.indicator, rec.year)) {
                return Err(AnalysisError::Indicators(format!("row {}: duplicate {} {} {}", line + 2, rec.country, rec.indicator.slug(), rec.year)));
            }
            records.push(rec);
        }
        Ok(IndicatorTable { records })
    }

    pub fn load(path: &Path) -> Result<Self, AnalysisError> {
        let f = std::fs::File::open(path).map_err(|e| AnalysisError::Indicators(format!("{}: {e}", path.display())))?;
        Self::from_reader(f)
    }

    /// Distinct `(indicator, year)` pairs, sorted.
    pub fn columns(&self) -> Vec<(Indicator, u16)> {
        self.records.iter().map(|r| (r.indicator, r.year)).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn value(&self, country: &CountryCode, indicator: Indicator, year: u16) -> Option<f64> {
        self.records.iter().find(|r| &r.country == country && r.indicator == indicator && r.year == year).and_then(|r| r.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub section: Section,
    pub topic: usize,
}

/// Rank correlation of per-section topic shares against indicator columns.
/// `rho` is `None` where the correlation is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub subset_id: SubsetId,
    pub rows: Vec<CorrelationRow>,
    pub columns: Vec<String>,
    pub rho: Vec<Vec<Option<f64>>>,
    /// Complete pairs behind each entry.
    pub n: Vec<Vec<usize>>,
}

impl CorrelationMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = format!("section,topic,{}\n", self.columns.join(","));
        for (row, vals) in self.rows.iter().zip(&self.rho) {
            let cells: Vec<String> = vals.iter().map(|v| v.map(|x| format!("{x:e}")).unwrap_or_default()).collect();
            out.push_str(&format!("{},{},{}\n", row.section, row.topic, cells.join(",")));
        }
        out
    }
}

/// One row per (section, topic); one column per indicator and year.
pub fn correlation_matrix(subset: SubsetId, theta: &[(DocumentKey, Vec<f64>)], table: &IndicatorTable) -> CorrelationMatrix {
    let columns = table.columns();
    let k = theta.first().map_or(0, |(_, v)| v.len());
    let mut by_section: BTreeMap<Section, Vec<(&CountryCode, &[f64])>> = BTreeMap::new();
    for (key, v) in theta {
        by_section.entry(key.section).or_default().push((&key.country, v));
    }
    let mut out = CorrelationMatrix {
        subset_id: subset,
        rows: vec![],
        columns: columns.iter().map(|(i, y)| format!("{}_{y}", i.slug())).collect(),
        rho: vec![],
        n: vec![],
    };
    for &section in subset.sections() {
        let Some(docs) = by_section.get(&section) else { continue };
        for topic in 0..k {
            let x: Vec<f64> = docs.iter().map(|(_, v)| v[topic]).collect();
            let mut rho_row = Vec::with_capacity(columns.len());
            let mut n_row = Vec::with_capacity(columns.len());
            for &(ind, year) in &columns {
                let y: Vec<f64> = docs.iter().map(|(c, _)| table.value(c, ind, year).unwrap_or(f64::NAN)).collect();
                n_row.push(y.iter().filter(|v| !v.is_nan()).count());
                rho_row.push(spearman(&x, &y).ok());
            }
            out.rows.push(CorrelationRow { section, topic });
            out.rho.push(rho_row);
            out.n.push(n_row);
        }
    }
    out
}
