use crate::error::{Error, Result};

/// One (successes, trials) pair observed under a condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub x: u64,
    pub n: u64,
    pub condition_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitRecord {
    pub unit_id: String,
    /// One entry per condition, in the dataset's global condition order.
    pub observations: Vec<Observation>,
}

impl UnitRecord {
    /// Total number of trials across conditions.
    pub fn total_trials(&self) -> u64 {
        self.observations.iter().map(|o| o.n).sum()
    }
}

/// Repeated bivariate counts: `M` units, each observed under the same `p`
/// conditions. Observation rows are addressed unit-major, `g * p + h`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepeatedCountData {
    units: Vec<UnitRecord>,
    conditions: Vec<String>,
}

impl RepeatedCountData {
    /// Validates and builds the dataset. Observations within each unit are
    /// reordered to follow `conditions`.
    pub fn new(conditions: Vec<String>, mut units: Vec<UnitRecord>) -> Result<Self> {
        if conditions.is_empty() {
            return Err(Error::Data("at least one condition is required".into()));
        }
        if units.is_empty() {
            return Err(Error::Data("at least one unit is required".into()));
        }
        for (i, c) in conditions.iter().enumerate() {
            if conditions[..i].contains(c) {
                return Err(Error::Data(format!("duplicate condition id `{c}`")));
            }
        }
        for unit in &mut units {
            if unit.observations.len() != conditions.len() {
                return Err(Error::Data(format!(
                    "unit `{}` has {} observations, expected {}",
                    unit.unit_id,
                    unit.observations.len(),
                    conditions.len()
                )));
            }
            let mut ordered = Vec::with_capacity(conditions.len());
            for c in &conditions {
                let mut found = unit.observations.iter().filter(|o| &o.condition_id == c);
                let obs = found.next().ok_or_else(|| {
                    Error::Data(format!("unit `{}` lacks condition `{c}`", unit.unit_id))
                })?;
                if found.next().is_some() {
                    return Err(Error::Data(format!(
                        "unit `{}` repeats condition `{c}`",
                        unit.unit_id
                    )));
                }
                if obs.x > obs.n {
                    return Err(Error::Data(format!(
                        "unit `{}`, condition `{c}`: x = {} exceeds n = {}",
                        unit.unit_id, obs.x, obs.n
                    )));
                }
                ordered.push(obs.clone());
            }
            unit.observations = ordered;
        }
        Ok(Self { units, conditions })
    }

    /// Builds a dataset from raw `(x, n)` rows, one slice per unit, naming
    /// units `0..M` and conditions `0..p`.
    pub fn from_counts(rows: &[Vec<(u64, u64)>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        let conditions: Vec<String> = (0..p).map(|h| h.to_string()).collect();
        let units = rows
            .iter()
            .enumerate()
            .map(|(g, obs)| UnitRecord {
                unit_id: g.to_string(),
                observations: obs
                    .iter()
                    .enumerate()
                    .map(|(h, &(x, n))| Observation {
                        x,
                        n,
                        condition_id: h.to_string(),
                    })
                    .collect(),
            })
            .collect();
        Self::new(conditions, units)
    }

    pub fn units(&self) -> &[UnitRecord] {
        &self.units
    }

    pub fn conditions(&self) -> &[String] {
        &self.conditions
    }

    /// Number of units, `M`.
    pub fn m(&self) -> usize {
        self.units.len()
    }

    /// Number of conditions per unit, `p`.
    pub fn p(&self) -> usize {
        self.conditions.len()
    }

    pub fn n_rows(&self) -> usize {
        self.m() * self.p()
    }

    /// Iterates `(row, &Observation)` in unit-major order.
    pub fn rows(&self) -> impl Iterator<Item = (usize, &Observation)> + '_ {
        let p = self.p();
        self.units.iter().enumerate().flat_map(move |(g, u)| {
            u.observations
                .iter()
                .enumerate()
                .map(move |(h, o)| (g * p + h, o))
        })
    }

    /// Stacked trial counts, unit-major.
    pub fn trials(&self) -> Vec<u64> {
        self.rows().map(|(_, o)| o.n).collect()
    }

    pub fn successes(&self) -> Vec<u64> {
        self.rows().map(|(_, o)| o.x).collect()
    }
}
