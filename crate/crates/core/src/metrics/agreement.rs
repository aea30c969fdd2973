use std::collections::BTreeMap;
use std::path::Path;

use super::MetricsError;

/// Raters × items grid of nominal codes; `None` marks a missing rating.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationMatrix {
    pub ratings: Vec<Vec<Option<String>>>,
}

impl AnnotationMatrix {
    pub fn new(ratings: Vec<Vec<Option<String>>>) -> Result<Self, MetricsError> {
        if ratings.len() < 2 {
            return Err(MetricsError::InsufficientData(format!("{} rater(s), need at least 2", ratings.len())));
        }
        let items = ratings[0].len();
        if ratings.iter().any(|r| r.len() != items) {
            return Err(MetricsError::InsufficientData("raters rated different numbers of items".into()));
        }
        if items < 2 {
            return Err(MetricsError::InsufficientData(format!("{items} item(s), need at least 2")));
        }
        Ok(Self { ratings })
    }

    pub fn from_codes<S: AsRef<str>>(rows: &[Vec<Option<S>>]) -> Result<Self, MetricsError> {
        Self::new(rows.iter().map(|r| r.iter().map(|c| c.as_ref().map(|s| s.as_ref().to_string())).collect()).collect())
    }

    pub fn raters(&self) -> usize {
        self.ratings.len()
    }

    pub fn items(&self) -> usize {
        self.ratings[0].len()
    }
}

/// Reads raters as rows and items as columns, no header; an empty cell is missing.
pub fn load_agreement_csv(path: impl AsRef<Path>) -> Result<AnnotationMatrix, MetricsError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| MetricsError::MalformedCsv(e.to_string()))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| MetricsError::MalformedCsv(e.to_string()))?;
        rows.push(record.iter().map(|c| (!c.is_empty()).then(|| c.to_string())).collect());
    }
    AnnotationMatrix::new(rows)
}

/// Nominal Krippendorff's alpha via the coincidence matrix. Items with fewer than two
/// ratings are not pairable and are skipped. Returns exactly 1.0 when no pairable
/// values disagree.
pub fn krippendorff_alpha(m: &AnnotationMatrix) -> Result<f64, MetricsError> {
    let mut codes: BTreeMap<&str, usize> = BTreeMap::new();
    for row in &m.ratings {
        for v in row.iter().flatten() {
            let next = codes.len();
            codes.entry(v.as_str()).or_insert(next);
        }
    }
    let k = codes.len();
    let mut coincidence = vec![vec![0.0f64; k]; k];
    for item in 0..m.items() {
        let values: Vec<usize> = m.ratings.iter().filter_map(|r| r[item].as_deref()).map(|v| codes[v]).collect();
        let mu = values.len();
        if mu < 2 {
            continue;
        }
        let w = 1.0 / (mu - 1) as f64;
        for (i, &a) in values.iter().enumerate() {
            for (j, &b) in values.iter().enumerate() {
                if i != j {
                    coincidence[a][b] += w;
                }
            }
        }
    }
    let marginals: Vec<f64> = coincidence.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();
    if n < 2.0 {
        return Err(MetricsError::InsufficientData("no item has two or more ratings".into()));
    }
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            if c != d {
                observed += coincidence[c][d];
                expected += marginals[c] * marginals[d];
            }
        }
    }
    if observed == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[&str]]) -> AnnotationMatrix {
        AnnotationMatrix::new(
            rows.iter()
                .map(|r| r.iter().map(|c| (!c.is_empty()).then(|| c.to_string())).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn perfect_agreement() {
        assert_eq!(krippendorff_alpha(&matrix(&[&["a", "b", "a", "c"], &["a", "b", "a", "c"]])).unwrap(), 1.0);
        // single category everywhere is still zero disagreement
        assert_eq!(krippendorff_alpha(&matrix(&[&["a", "a"], &["a", "a"]])).unwrap(), 1.0);
    }

    #[test]
    fn swapped_pair_is_minus_half() {
        assert_eq!(krippendorff_alpha(&matrix(&[&["a", "b"], &["b", "a"]])).unwrap(), -0.5);
    }

    // Krippendorff (2011), "Computing Krippendorff's Alpha-Reliability", nominal example: 0.743
    #[test]
    fn reference_example_with_missing_values() {
        let m = matrix(&[
            &["1", "2", "3", "3", "2", "1", "4", "1", "2", "", "", ""],
            &["1", "2", "3", "3", "2", "2", "4", "1", "2", "5", "", "3"],
            &["", "3", "3", "3", "2", "3", "4", "2", "2", "5", "1", ""],
            &["1", "2", "3", "3", "2", "4", "4", "1", "2", "5", "1", ""],
        ]);
        let a = krippendorff_alpha(&m).unwrap();
        assert!((a - 0.743).abs() < 5e-4, "alpha = {a}");
    }

    #[test]
    fn insufficient_data() {
        assert!(AnnotationMatrix::from_codes(&[vec![Some("a"), Some("b")]]).is_err());
        assert!(AnnotationMatrix::from_codes(&[vec![Some("a")], vec![Some("a")]]).is_err());
        let lonely = matrix(&[&["a", ""], &["", "b"]]);
        assert!(matches!(krippendorff_alpha(&lonely), Err(MetricsError::InsufficientData(_))));
    }

    #[test]
    fn csv_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "a,b,,c\na,b,a,c\n").unwrap();
        let m = load_agreement_csv(&p).unwrap();
        assert_eq!(m.raters(), 2);
        assert_eq!(m.ratings[0][2], None);
        assert_eq!(krippendorff_alpha(&m).unwrap(), 1.0);
    }
}
