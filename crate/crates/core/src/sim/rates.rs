use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::model::UrnCoefficients;
use crate::numeric::CompensatedSum;

/// A single transition of the chain. Indices are 0-based urn indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Event {
    /// `x(i) <- c(i/N) x(i)`.
    Refresh(usize),
    /// Linear update of the ordered pair `(i, j)`, `i != j`.
    Interaction(usize, usize),
}

/// Event rates of the chain and an alias sampler over the combined event set.
///
/// Event index `k < n` is `Refresh(k)`; the remaining `n (n - 1)` indices
/// enumerate ordered pairs row by row, skipping the diagonal.
pub struct RateTable {
    n: usize,
    refresh_rates: Vec<f64>,
    pair_rates: Vec<f64>,
    total_rate: f64,
    sampler: Option<WeightedAliasIndex<f64>>,
}

impl std::fmt::Debug for RateTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RateTable")
            .field("n", &self.n)
            .field("total_rate", &self.total_rate)
            .finish_non_exhaustive()
    }
}

impl RateTable {
    pub fn from_coefficients(coef: &UrnCoefficients) -> Result<Self> {
        let n = coef.n;
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 urns, got {n}")));
        }
        let inv_n = 1.0 / n as f64;
        let refresh_rates = coef.b.clone();
        let mut pair_rates = Vec::with_capacity(n * (n - 1));
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                pair_rates.push(inv_n * coef.lambda(i, j));
            }
        }
        if refresh_rates
            .iter()
            .chain(&pair_rates)
            .any(|r| !(*r >= 0.0) || !r.is_finite())
        {
            return Err(Error::InvalidModel(
                "event rates must be finite and nonnegative".into(),
            ));
        }
        let mut total = CompensatedSum::new();
        refresh_rates
            .iter()
            .chain(&pair_rates)
            .for_each(|&r| total.add(r));
        let total_rate = total.value();

        let sampler = if total_rate > 0.0 {
            let weights: Vec<f64> = refresh_rates.iter().chain(&pair_rates).copied().collect();
            Some(
                WeightedAliasIndex::new(weights)
                    .map_err(|e| Error::Numerical(format!("alias table construction: {e}")))?,
            )
        } else {
            None
        };
        Ok(RateTable {
            n,
            refresh_rates,
            pair_rates,
            total_rate,
            sampler,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Entry `i` is `b(i/N)`.
    pub fn refresh_rates(&self) -> &[f64] {
        &self.refresh_rates
    }

    /// Ordered-pair rates `lambda(i/N, j/N) / N` in event-index order.
    pub fn pair_rates(&self) -> &[f64] {
        &self.pair_rates
    }

    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    pub fn event_count(&self) -> usize {
        self.n + self.pair_rates.len()
    }

    pub fn event(&self, index: usize) -> Event {
        if index < self.n {
            return Event::Refresh(index);
        }
        let p = index - self.n;
        let i = p / (self.n - 1);
        let r = p % (self.n - 1);
        let j = if r < i { r } else { r + 1 };
        Event::Interaction(i, j)
    }

    pub fn index_of(&self, event: Event) -> usize {
        match event {
            Event::Refresh(i) => i,
            Event::Interaction(i, j) => {
                let r = if j < i { j } else { j - 1 };
                self.n + i * (self.n - 1) + r
            }
        }
    }

    pub fn rate(&self, event: Event) -> f64 {
        let k = self.index_of(event);
        if k < self.n {
            self.refresh_rates[k]
        } else {
            self.pair_rates[k - self.n]
        }
    }

    /// Draw an event proportionally to its rate; `None` when every rate is zero.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Event> {
        self.sampler.as_ref().map(|s| self.event(s.sample(rng)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    fn table(lambda: &str, b: &str, n: usize) -> RateTable {
        let spec = ModelSpec::from_sources(b, "1", lambda, "0", "1", "0", "1", "0.5").unwrap();
        RateTable::from_coefficients(&UrnCoefficients::new(&spec, n)).unwrap()
    }

    #[test]
    fn total_rate_examples() {
        assert!((table("1", "0", 10).total_rate() - 9.0).abs() < 1e-12);
        assert_eq!(table("0", "1", 5).total_rate(), 5.0);
        // (1/2)[lambda(1/2, 1) + lambda(1, 1/2)] with lambda = u + v.
        assert_eq!(table("u + v", "0", 2).total_rate(), 1.5);
    }

    #[test]
    fn event_index_is_a_bijection() {
        let t = table("1", "1", 5);
        assert_eq!(t.event_count(), 25);
        for k in 0..t.event_count() {
            let e = t.event(k);
            if let Event::Interaction(i, j) = e {
                assert_ne!(i, j);
            }
            assert_eq!(t.index_of(e), k);
        }
    }

    #[test]
    fn pair_rates_follow_ordered_pairs() {
        let t = table("u + 2*v", "0", 3);
        let r = t.rate(Event::Interaction(0, 2));
        assert!((r - (1.0 / 3.0 + 2.0) / 3.0).abs() < 1e-15);
        let r = t.rate(Event::Interaction(2, 0));
        assert!((r - (1.0 + 2.0 / 3.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_rates_have_no_sampler() {
        let t = table("0", "0", 4);
        assert_eq!(t.total_rate(), 0.0);
        let mut rng = crate::sim::substream(1, 0);
        assert!(t.sample(&mut rng).is_none());
    }

    #[test]
    fn rejects_single_urn() {
        let spec = ModelSpec::from_sources("0", "1", "1", "0", "1", "0", "1", "0.5").unwrap();
        assert!(RateTable::from_coefficients(&UrnCoefficients::new(&spec, 1)).is_err());
    }
}
