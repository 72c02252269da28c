use super::kernel::IntervalRecord;
use super::SimError;

/// One interval of a with/without-P2P comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub interval: usize,
    pub hour: f64,
    pub ri_with: f64,
    pub ri_without: f64,
    /// Mean nodal price over nodes, $/MWh.
    pub dlmp_with: f64,
    pub dlmp_without: f64,
    pub atp_with: Option<f64>,
}

impl ComparisonRow {
    pub fn ri_delta(&self) -> f64 {
        self.ri_with - self.ri_without
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Intervals where the P2P run served less than the run without it.
    pub violations: Vec<usize>,
}

impl Comparison {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Tolerance on the RI ordering, percent.
pub const RI_TOLERANCE: f64 = 1e-6;

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Pairs two runs of the same scenario interval by interval.
pub fn compare_runs(with_p2p: &[IntervalRecord], without_p2p: &[IntervalRecord]) -> Result<Comparison, SimError> {
    if with_p2p.len() != without_p2p.len() {
        return Err(SimError::HorizonMismatch { left: with_p2p.len(), right: without_p2p.len() });
    }
    let mut rows = Vec::with_capacity(with_p2p.len());
    let mut violations = Vec::new();
    for (a, b) in with_p2p.iter().zip(without_p2p) {
        if a.interval != b.interval {
            return Err(SimError::HorizonMismatch { left: a.interval, right: b.interval });
        }
        if a.ri < b.ri - RI_TOLERANCE {
            violations.push(a.interval);
        }
        rows.push(ComparisonRow {
            interval: a.interval,
            hour: a.hour,
            ri_with: a.ri,
            ri_without: b.ri,
            dlmp_with: mean(&a.dlmp),
            dlmp_without: mean(&b.dlmp),
            atp_with: a.atp,
        });
    }
    Ok(Comparison { rows, violations })
}
