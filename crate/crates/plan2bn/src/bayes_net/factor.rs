//! Factors over sets of discrete variables, the working currency of
//! variable elimination. Scope is kept sorted by variable index; values are
//! row-major with the first scope variable most significant.

/// A non-negative table over the Cartesian product of its scope's domains.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    scope: Vec<usize>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Factor {
    /// Factor with empty scope holding a single value.
    pub fn constant(value: f64) -> Self {
        Factor { scope: Vec::new(), cards: Vec::new(), values: vec![value] }
    }

    /// Single-variable factor from a likelihood (or indicator) vector.
    pub fn unary(var: usize, values: Vec<f64>) -> Self {
        Factor { scope: vec![var], cards: vec![values.len()], values }
    }

    /// Builds a factor from explicit parts. `scope` must be strictly
    /// ascending and `values.len()` must equal the product of `cards`.
    pub fn new(scope: Vec<usize>, cards: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert!(scope.windows(2).all(|w| w[0] < w[1]), "scope must be sorted");
        debug_assert_eq!(values.len(), cards.iter().product::<usize>());
        debug_assert_eq!(scope.len(), cards.len());
        Factor { scope, cards, values }
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.cards.len()];
        for i in (0..self.cards.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.cards[i + 1];
        }
        s
    }

    /// Pointwise product over the union of both scopes.
    pub fn product(&self, other: &Factor) -> Factor {
        let mut scope = Vec::new();
        let mut cards = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.scope.len() || j < other.scope.len() {
            let take_self = match (self.scope.get(i), other.scope.get(j)) {
                (Some(a), Some(b)) => a <= b,
                (Some(_), None) => true,
                _ => false,
            };
            if take_self {
                if other.scope.get(j) == Some(&self.scope[i]) {
                    j += 1;
                }
                scope.push(self.scope[i]);
                cards.push(self.cards[i]);
                i += 1;
            } else {
                scope.push(other.scope[j]);
                cards.push(other.cards[j]);
                j += 1;
            }
        }

        // Per merged-scope position: stride into each operand (0 if absent).
        let self_strides = self.strides();
        let other_strides = other.strides();
        let map_strides = |src_scope: &[usize], src_strides: &[usize]| -> Vec<usize> {
            scope
                .iter()
                .map(|v| {
                    src_scope
                        .iter()
                        .position(|s| s == v)
                        .map(|p| src_strides[p])
                        .unwrap_or(0)
                })
                .collect()
        };
        let a_str = map_strides(&self.scope, &self_strides);
        let b_str = map_strides(&other.scope, &other_strides);

        let size: usize = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut assignment = vec![0usize; scope.len()];
        let (mut ai, mut bi) = (0usize, 0usize);
        for _ in 0..size {
            values.push(self.values[ai] * other.values[bi]);
            for pos in (0..scope.len()).rev() {
                assignment[pos] += 1;
                ai += a_str[pos];
                bi += b_str[pos];
                if assignment[pos] < cards[pos] {
                    break;
                }
                ai -= a_str[pos] * cards[pos];
                bi -= b_str[pos] * cards[pos];
                assignment[pos] = 0;
            }
        }
        Factor { scope, cards, values }
    }

    /// Sums the named variable out of the factor. No-op if absent.
    pub fn sum_out(&self, var: usize) -> Factor {
        let Some(pos) = self.scope.iter().position(|v| *v == var) else {
            return self.clone();
        };
        let card = self.cards[pos];
        let strides = self.strides();
        let stride = strides[pos];

        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        scope.remove(pos);
        cards.remove(pos);

        let size: usize = cards.iter().product();
        let mut values = vec![0.0; size];
        // Iterate the original table once, folding the summed axis away.
        let block = stride * card;
        for (idx, v) in self.values.iter().enumerate() {
            let out_idx = (idx / block) * stride + idx % stride;
            values[out_idx] += v;
        }
        Factor { scope, cards, values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_of_unaries_is_outer_product() {
        let a = Factor::unary(0, vec![0.1, 0.9]);
        let b = Factor::unary(1, vec![0.5, 0.25, 0.25]);
        let p = a.product(&b);
        assert_eq!(p.scope(), &[0, 1]);
        let expected = [0.05, 0.025, 0.025, 0.45, 0.225, 0.225];
        for (got, want) in p.values().iter().zip(expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn product_aligns_shared_variables() {
        // f(a,b) * g(b): entry (a,b) scales by g[b].
        let f = Factor::new(vec![0, 1], vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let g = Factor::unary(1, vec![10.0, 100.0]);
        let p = f.product(&g);
        assert_eq!(p.scope(), &[0, 1]);
        assert_eq!(p.values(), &[10.0, 200.0, 30.0, 400.0]);
    }

    #[test]
    fn sum_out_middle_axis() {
        // f(a,b,c) with cards 2,2,2; summing b adds index pairs.
        let f = Factor::new(
            vec![0, 1, 2],
            vec![2, 2, 2],
            vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0],
        );
        let s = f.sum_out(1);
        assert_eq!(s.scope(), &[0, 2]);
        assert_eq!(s.values(), &[5.0, 10.0, 80.0, 160.0]);
    }

    #[test]
    fn sum_out_to_constant() {
        let f = Factor::unary(3, vec![0.3, 0.7]);
        let s = f.sum_out(3);
        assert!(s.scope().is_empty());
        assert!((s.values()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn product_with_constant_scales() {
        let f = Factor::unary(0, vec![0.5, 0.5]);
        let c = Factor::constant(2.0);
        let p = f.product(&c);
        assert_eq!(p.scope(), &[0]);
        assert_eq!(p.values(), &[1.0, 1.0]);
    }
}
