use std::cmp::Ordering;
use std::ops::Index;

/// A derivative multi-index over the independent variables of a context.
///
/// `orders[i]` is the number of derivatives taken in the `i`-th independent
/// direction. The total order `|σ|` is the sum of the entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    orders: Vec<u32>,
}

impl MultiIndex {
    pub fn zero(n_independents: usize) -> Self {
        MultiIndex {
            orders: vec![0; n_independents],
        }
    }

    pub fn new(orders: Vec<u32>) -> Self {
        MultiIndex { orders }
    }

    pub fn len(&self) -> usize {
        self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.orders.iter().all(|&k| k == 0)
    }

    /// Total order `|σ|`.
    pub fn order(&self) -> u32 {
        self.orders.iter().sum()
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    /// The index with one more derivative in direction `dir`.
    pub fn bumped(&self, dir: usize) -> Self {
        let mut orders = self.orders.clone();
        orders[dir] += 1;
        MultiIndex { orders }
    }

    /// Componentwise `self ≤ other`.
    pub fn le(&self, other: &Self) -> bool {
        self.orders
            .iter()
            .zip(&other.orders)
            .all(|(a, b)| a <= b)
    }

    /// Componentwise difference, assuming `other ≤ self`.
    pub fn sub(&self, other: &Self) -> Self {
        MultiIndex {
            orders: self
                .orders
                .iter()
                .zip(&other.orders)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        MultiIndex {
            orders: self
                .orders
                .iter()
                .zip(&other.orders)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    /// Componentwise maximum.
    pub fn max(&self, other: &Self) -> Self {
        MultiIndex {
            orders: self
                .orders
                .iter()
                .zip(&other.orders)
                .map(|(a, b)| *a.max(b))
                .collect(),
        }
    }

    /// All indices `μ ≤ self`, in graded-lex order.
    pub fn divisors(&self) -> Vec<MultiIndex> {
        let mut out = vec![MultiIndex::zero(self.orders.len())];
        for (dir, &k) in self.orders.iter().enumerate() {
            let mut next = Vec::with_capacity(out.len() * (k as usize + 1));
            for m in &out {
                for j in 0..=k {
                    let mut orders = m.orders.clone();
                    orders[dir] = j;
                    next.push(MultiIndex { orders });
                }
            }
            out = next;
        }
        out.sort();
        out
    }

    /// All indices with total order ≤ `bound` over `n` directions, sorted.
    pub fn all_up_to(n: usize, bound: u32) -> Vec<MultiIndex> {
        fn rec(n: usize, bound: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            if prefix.len() == n {
                out.push(MultiIndex {
                    orders: prefix.clone(),
                });
                return;
            }
            for k in 0..=bound {
                prefix.push(k);
                rec(n, bound - k, prefix, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        rec(n, bound, &mut Vec::new(), &mut out);
        out.sort();
        out
    }
}

impl Index<usize> for MultiIndex {
    type Output = u32;
    fn index(&self, i: usize) -> &u32 {
        &self.orders[i]
    }
}

/// Graded lexicographic order: first by total order, then lexicographically.
impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| self.orders.cmp(&other.orders))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Product of binomial coefficients `Π_i C(σ_i, μ_i)`, as needed by the
/// multi-dimensional Leibniz rule.
pub fn multi_binomial(sigma: &MultiIndex, mu: &MultiIndex) -> num_bigint::BigInt {
    use num_bigint::BigInt;
    let mut acc = BigInt::from(1u32);
    for (s, m) in sigma.orders().iter().zip(mu.orders()) {
        acc *= binomial(*s, *m);
    }
    acc
}

fn binomial(n: u32, k: u32) -> num_bigint::BigInt {
    use num_bigint::BigInt;
    if k > n {
        return BigInt::from(0u32);
    }
    let mut num = BigInt::from(1u32);
    let mut den = BigInt::from(1u32);
    for i in 0..k {
        num *= n - i;
        den *= i + 1;
    }
    num / den
}
