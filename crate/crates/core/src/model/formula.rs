//! Reference-cell design construction from factor declarations.
//!
//! Terms are written as `factor` (all non-reference levels), `factor[level]`
//! (a single level), or a pairwise interaction of either form joined by `*`,
//! e.g. `stage*hand` or `session[F]*sequence[C]`. Every formula carries an
//! implicit intercept for the reference cell.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::design::{ColumnMeta, DesignSet};
use crate::error::{Block, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// Constant within a unit.
    Unit,
    /// May vary between the conditions of a unit.
    Condition,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    pub name: String,
    pub levels: Vec<String>,
    pub reference: String,
    pub scope: Scope,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermPart {
    pub factor: String,
    pub level: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub parts: Vec<TermPart>,
}

impl Term {
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<TermPart> = text
            .split('*')
            .map(|raw| {
                let raw = raw.trim();
                if raw.is_empty() {
                    return Err(Error::Design(format!("empty factor in term `{text}`")));
                }
                match raw.split_once('[') {
                    None => Ok(TermPart {
                        factor: raw.to_string(),
                        level: None,
                    }),
                    Some((factor, rest)) => {
                        let level = rest.strip_suffix(']').ok_or_else(|| {
                            Error::Design(format!("unterminated level in term `{text}`"))
                        })?;
                        Ok(TermPart {
                            factor: factor.trim().to_string(),
                            level: Some(level.trim().to_string()),
                        })
                    }
                }
            })
            .collect::<Result<_>>()?;
        if parts.len() > 2 {
            return Err(Error::Design(format!(
                "term `{text}`: only main effects and pairwise interactions are supported"
            )));
        }
        Ok(Self { parts })
    }

    pub fn is_interaction(&self) -> bool {
        self.parts.len() > 1
    }
}

impl std::fmt::Display for Term {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .parts
            .iter()
            .map(|p| match &p.level {
                Some(l) => format!("{}[{l}]", p.factor),
                None => p.factor.clone(),
            })
            .collect();
        f.write_str(&parts.join("*"))
    }
}

/// Per-observation covariate levels, rows in unit-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CovariateTable {
    pub names: Vec<String>,
    pub values: Vec<Vec<String>>,
}

impl CovariateTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Level assignment of one row as a map.
    pub fn row_map(&self, row: usize) -> BTreeMap<String, String> {
        self.names
            .iter()
            .cloned()
            .zip(self.values[row].iter().cloned())
            .collect()
    }
}

/// Factor declarations plus one term list per link.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFormula {
    factors: Vec<Factor>,
    terms: [Vec<Term>; 5],
}

struct Column {
    meta: ColumnMeta,
    /// (factor index, level) pairs that must all match for a one.
    cells: Vec<(usize, String)>,
    term: String,
}

impl ModelFormula {
    pub fn new(factors: Vec<Factor>, terms: [Vec<Term>; 5]) -> Result<Self> {
        for (i, f) in factors.iter().enumerate() {
            if factors[..i].iter().any(|o| o.name == f.name) {
                return Err(Error::Design(format!("factor `{}` declared twice", f.name)));
            }
            if f.levels.len() < 2 {
                return Err(Error::Design(format!("factor `{}` needs at least two levels", f.name)));
            }
            for (j, l) in f.levels.iter().enumerate() {
                if f.levels[..j].contains(l) {
                    return Err(Error::Design(format!("factor `{}` repeats level `{l}`", f.name)));
                }
            }
            if !f.levels.contains(&f.reference) {
                return Err(Error::Design(format!(
                    "reference level `{}` is not a level of `{}`",
                    f.reference, f.name
                )));
            }
        }
        let formula = Self { factors, terms };
        for block in Block::ALL {
            for term in &formula.terms[block as usize] {
                formula.check_term(block, term)?;
            }
            let cols = formula.columns(block)?;
            for (i, c) in cols.iter().enumerate() {
                if cols[..i].iter().any(|o| o.meta.name == c.meta.name) {
                    return Err(Error::Design(format!(
                        "{block} formula produces column `{}` twice",
                        c.meta.name
                    )));
                }
            }
        }
        Ok(formula)
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn terms(&self, block: Block) -> &[Term] {
        &self.terms[block as usize]
    }

    fn factor(&self, name: &str) -> Option<(usize, &Factor)> {
        self.factors.iter().enumerate().find(|(_, f)| f.name == name)
    }

    fn check_term(&self, block: Block, term: &Term) -> Result<()> {
        for (i, part) in term.parts.iter().enumerate() {
            let (_, factor) = self.factor(&part.factor).ok_or_else(|| {
                Error::Design(format!("{block} term `{term}` uses undeclared factor `{}`", part.factor))
            })?;
            if term.parts[..i].iter().any(|o| o.factor == part.factor) {
                return Err(Error::Design(format!(
                    "{block} term `{term}` repeats factor `{}`",
                    part.factor
                )));
            }
            if let Some(level) = &part.level {
                if !factor.levels.contains(level) {
                    return Err(Error::Design(format!(
                        "{block} term `{term}`: `{level}` is not a level of `{}`",
                        factor.name
                    )));
                }
                if level == &factor.reference {
                    return Err(Error::Design(format!(
                        "{block} term `{term}`: `{level}` is the reference level of `{}`",
                        factor.name
                    )));
                }
            }
            if block.per_unit() && factor.scope != Scope::Unit {
                return Err(Error::Design(format!(
                    "{block} term `{term}` uses condition-level factor `{}`; \
                     {block} may only depend on unit-level factors",
                    factor.name
                )));
            }
        }
        Ok(())
    }

    fn level_label(&self, factor: &Factor, level: &str) -> String {
        let ambiguous = self
            .factors
            .iter()
            .filter(|f| f.name != factor.name)
            .any(|f| f.levels.iter().any(|l| l == level));
        if ambiguous || level == "0" && factor.reference != "0" {
            format!("{}={level}", factor.name)
        } else {
            level.to_string()
        }
    }

    fn columns(&self, block: Block) -> Result<Vec<Column>> {
        let reference: Vec<String> = self
            .factors
            .iter()
            .filter(|f| !block.per_unit() || f.scope == Scope::Unit)
            .map(|f| format!("{}={}", f.name, f.reference))
            .collect();
        let intercept = if reference.is_empty() {
            "intercept".to_string()
        } else {
            format!("reference cell ({})", reference.join(", "))
        };
        let mut cols = vec![Column {
            meta: ColumnMeta::new("0", intercept, 0),
            cells: vec![],
            term: "intercept".into(),
        }];
        for term in self.terms(block) {
            let mut combos: Vec<Vec<(usize, String)>> = vec![vec![]];
            for part in &term.parts {
                let (idx, factor) = self
                    .factor(&part.factor)
                    .ok_or_else(|| Error::Design(format!("undeclared factor `{}`", part.factor)))?;
                let levels: Vec<String> = match &part.level {
                    Some(l) => vec![l.clone()],
                    None => factor
                        .levels
                        .iter()
                        .filter(|l| **l != factor.reference)
                        .cloned()
                        .collect(),
                };
                combos = combos
                    .into_iter()
                    .flat_map(|prefix| {
                        levels.iter().map(move |l| {
                            let mut next = prefix.clone();
                            next.push((idx, l.clone()));
                            next
                        })
                    })
                    .collect();
            }
            for cells in combos {
                let labels: Vec<String> = cells
                    .iter()
                    .map(|(i, l)| self.level_label(&self.factors[*i], l))
                    .collect();
                let described: Vec<String> = cells
                    .iter()
                    .map(|(i, l)| format!("{}={l}", self.factors[*i].name))
                    .collect();
                let order = cells.len() as u8;
                cols.push(Column {
                    meta: ColumnMeta::new(
                        labels.join("*"),
                        format!("effect of {}", described.join(" and ")),
                        order,
                    ),
                    cells,
                    term: term.to_string(),
                });
            }
        }
        Ok(cols)
    }

    /// Column metadata of `block` in design order.
    pub fn column_meta(&self, block: Block) -> Vec<ColumnMeta> {
        self.columns(block)
            .map(|cols| cols.into_iter().map(|c| c.meta).collect())
            .unwrap_or_default()
    }

    fn lookup(&self, covariates: &CovariateTable) -> Result<Vec<usize>> {
        self.factors
            .iter()
            .map(|f| {
                covariates
                    .column(&f.name)
                    .ok_or_else(|| Error::Data(format!("covariate column `{}` is missing", f.name)))
            })
            .collect()
    }

    fn check_levels(&self, covariates: &CovariateTable, m: usize, p: usize) -> Result<Vec<usize>> {
        let idx = self.lookup(covariates)?;
        if covariates.values.len() != m * p {
            return Err(Error::Dimension(format!(
                "covariate table has {} rows, expected {}",
                covariates.values.len(),
                m * p
            )));
        }
        for (fi, f) in self.factors.iter().enumerate() {
            for (r, row) in covariates.values.iter().enumerate() {
                let v = &row[idx[fi]];
                if !f.levels.contains(v) {
                    return Err(Error::Data(format!(
                        "row {r}: `{v}` is not a level of factor `{}`",
                        f.name
                    )));
                }
                if f.scope == Scope::Unit && r % p != 0 && *v != covariates.values[r - r % p][idx[fi]] {
                    return Err(Error::Data(format!(
                        "unit {}: unit-level factor `{}` varies within the unit",
                        r / p,
                        f.name
                    )));
                }
            }
        }
        Ok(idx)
    }

    /// Expands the formula against the data's covariates into a design set,
    /// failing with the offending term when a column is linearly dependent on
    /// the ones before it.
    pub fn build(&self, covariates: &CovariateTable, m: usize, p: usize) -> Result<DesignSet> {
        let idx = self.check_levels(covariates, m, p)?;
        let mut matrices = Vec::with_capacity(5);
        let mut metas = Vec::with_capacity(5);
        for block in Block::ALL {
            let cols = self.columns(block)?;
            let rows: Vec<usize> = if block.per_unit() {
                (0..m).map(|g| g * p).collect()
            } else {
                (0..m * p).collect()
            };
            let z = DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
                let row = &covariates.values[rows[i]];
                let hit = cols[j].cells.iter().all(|(fi, l)| row[idx[*fi]] == *l);
                if hit { 1.0 } else { 0.0 }
            });
            if let Some(j) = first_dependent_column(&z) {
                return Err(Error::Design(format!(
                    "{block} term `{}` (column `{}`) is not identified by the data: \
                     its column is a linear combination of earlier columns",
                    cols[j].term, cols[j].meta.name
                )));
            }
            matrices.push(z);
            metas.push(cols.into_iter().map(|c| c.meta).collect::<Vec<_>>());
        }
        let matrices: [DMatrix<f64>; 5] = matrices.try_into().expect("five blocks");
        let metas: [Vec<ColumnMeta>; 5] = metas.try_into().expect("five blocks");
        DesignSet::with_columns(m, p, matrices, metas)
    }

    /// Design row of `block` for an explicit level assignment.
    pub fn design_row(&self, block: Block, levels: &BTreeMap<String, String>) -> Result<DVector<f64>> {
        let cols = self.columns(block)?;
        let mut row = DVector::zeros(cols.len());
        for (j, col) in cols.iter().enumerate() {
            let mut hit = true;
            for (fi, l) in &col.cells {
                let f = &self.factors[*fi];
                let v = levels.get(&f.name).ok_or_else(|| {
                    Error::Usage(format!("no level given for factor `{}`", f.name))
                })?;
                if !f.levels.contains(v) {
                    return Err(Error::Usage(format!("`{v}` is not a level of factor `{}`", f.name)));
                }
                hit &= v == l;
            }
            row[j] = if hit { 1.0 } else { 0.0 };
        }
        Ok(row)
    }
}

/// Index of the first column lying in the span of the preceding columns.
fn first_dependent_column(z: &DMatrix<f64>) -> Option<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..z.ncols() {
        let col = z.column(j).clone_owned();
        let norm = col.norm();
        let mut v = col;
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v -= b * proj;
            }
        }
        if norm == 0.0 || v.norm() <= 1e-9 * norm {
            return Some(j);
        }
        let n = v.norm();
        basis.push(v / n);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factors() -> Vec<Factor> {
        vec![
            Factor {
                name: "stage".into(),
                levels: vec!["0".into(), "1".into(), "2".into()],
                reference: "0".into(),
                scope: Scope::Unit,
            },
            Factor {
                name: "session".into(),
                levels: vec!["B".into(), "F".into()],
                reference: "B".into(),
                scope: Scope::Condition,
            },
        ]
    }

    fn terms(mu: &[&str]) -> [Vec<Term>; 5] {
        let mut t: [Vec<Term>; 5] = Default::default();
        t[0] = mu.iter().map(|s| Term::parse(s).unwrap()).collect();
        t
    }

    fn table(m: usize) -> CovariateTable {
        let mut values = Vec::new();
        for g in 0..m {
            for s in ["B", "F"] {
                values.push(vec![(g % 3).to_string(), s.to_string()]);
            }
        }
        CovariateTable {
            names: vec!["stage".into(), "session".into()],
            values,
        }
    }

    #[test]
    fn parses_terms() {
        let t = Term::parse("session[F]*sequence[C]").unwrap();
        assert_eq!(t.parts.len(), 2);
        assert_eq!(t.parts[1].level.as_deref(), Some("C"));
        assert_eq!(t.to_string(), "session[F]*sequence[C]");
        assert!(Term::parse("a*b*c").is_err());
        assert!(Term::parse("a[b").is_err());
    }

    #[test]
    fn expands_reference_cell_columns() {
        let f = ModelFormula::new(factors(), terms(&["stage", "session[F]", "stage[2]*session"])).unwrap();
        let names: Vec<String> = f.column_meta(Block::Mu).into_iter().map(|c| c.name).collect();
        assert_eq!(names, ["0", "1", "2", "F", "2*F"]);
        let d = f.build(&table(6), 6, 2).unwrap();
        let z = d.z_mu();
        // unit 2 (stage 2), final session
        assert_eq!(z.row(5).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(d.z_alpha().ncols(), 1);
    }

    #[test]
    fn unit_blocks_reject_condition_factors() {
        let mut t = terms(&[]);
        t[Block::Alpha as usize] = vec![Term::parse("session").unwrap()];
        let err = ModelFormula::new(factors(), t).unwrap_err();
        assert!(err.to_string().contains("condition-level"));
    }

    #[test]
    fn rank_deficiency_names_term() {
        // stage 2 never occurs with only two units
        let f = ModelFormula::new(factors(), terms(&["stage[2]"])).unwrap();
        let err = f.build(&table(2), 2, 2).unwrap_err();
        assert!(err.to_string().contains("stage[2]"), "{err}");
    }

    #[test]
    fn unit_factor_must_be_constant() {
        let f = ModelFormula::new(factors(), terms(&[])).unwrap();
        let mut t = table(3);
        t.values[1][0] = "2".into();
        assert!(f.build(&t, 3, 2).is_err());
    }

    #[test]
    fn design_row_from_levels() {
        let f = ModelFormula::new(factors(), terms(&["stage", "stage[1]*session[F]"])).unwrap();
        let mut levels = BTreeMap::new();
        levels.insert("stage".to_string(), "1".to_string());
        levels.insert("session".to_string(), "F".to_string());
        let row = f.design_row(Block::Mu, &levels).unwrap();
        assert_eq!(row.as_slice(), &[1.0, 1.0, 0.0, 1.0]);
        levels.remove("session");
        assert!(f.design_row(Block::Mu, &levels).is_err());
    }
}
