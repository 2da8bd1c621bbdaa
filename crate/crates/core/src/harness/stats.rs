/// Mean, variance and their standard errors for one scalar functional.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalStats {
    pub name: String,
    pub mean: f64,
    pub variance: f64,
    /// `sqrt(variance / count)`.
    pub sem: f64,
    /// Standard error of the sample variance, `sqrt((m₄ - s⁴) / count)`.
    pub variance_sem: f64,
    pub count: usize,
}

impl FunctionalStats {
    pub fn from_samples(name: impl Into<String>, samples: &[f64]) -> Self {
        let n = samples.len();
        let nf = n as f64;
        let mean = samples.iter().sum::<f64>() / nf;
        let variance = if n > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0)
        } else {
            0.0
        };
        let m4 = samples.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
        let variance_sem = ((m4 - variance * variance).max(0.0) / nf).sqrt();
        Self {
            name: name.into(),
            mean,
            variance,
            sem: (variance / nf).sqrt(),
            variance_sem,
            count: n,
        }
    }
}

/// Statistics of a fixed family of functionals over one ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub functionals: Vec<FunctionalStats>,
}

impl EnsembleStats {
    pub fn count(&self) -> usize {
        self.functionals.first().map_or(0, |f| f.count)
    }

    pub fn get(&self, name: &str) -> Option<&FunctionalStats> {
        self.functionals.iter().find(|f| f.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_moments() {
        let s = FunctionalStats::from_samples("x", &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.sem - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        let c = FunctionalStats::from_samples("c", &[2.0; 10]);
        assert_eq!((c.variance, c.sem, c.variance_sem), (0.0, 0.0, 0.0));
    }
}
