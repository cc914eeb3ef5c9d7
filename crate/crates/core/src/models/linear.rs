//! Least-squares linear models and the global linear-regression baseline.

use serde::{Deserialize, Serialize};

use super::{CostModel, FitnessModel, COST_FLOOR};
use crate::domain::{InputFeatures, KnobSetting, KnobSpace};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `intercept + coefs . x`. Dropped (collinear or constant) columns carry a
/// zero coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LinearModel<F: Scalar> {
    pub intercept: F,
    pub coefs: Vec<F>,
}

impl<F: Scalar> LinearModel<F> {
    pub fn constant(value: F, dim: usize) -> Self {
        LinearModel {
            intercept: value,
            coefs: vec![F::zero(); dim],
        }
    }

    pub fn predict(&self, x: &[F]) -> F {
        self.coefs
            .iter()
            .zip(x)
            .fold(self.intercept, |acc, (&c, &v)| acc + c * v)
    }

    /// Intercept plus the number of non-zero coefficients.
    pub fn n_params(&self) -> usize {
        1 + self.coefs.iter().filter(|c| **c != F::zero()).count()
    }

    /// Ordinary least squares on the rows `xs` (all of equal length).
    ///
    /// Columns are centered and scaled to unit norm, then solved with a
    /// column-pivoted Householder QR. Columns whose remaining norm falls below
    /// [`Scalar::rank_tolerance`] are dropped, so a fully singular system
    /// degrades to the mean model.
    pub fn fit(xs: &[&[F]], ys: &[F]) -> Self {
        let n = ys.len();
        let p = xs.first().map_or(0, |r| r.len());
        if n == 0 {
            return LinearModel::constant(F::zero(), p);
        }
        let nf = F::of_usize(n);
        let y_mean = ys.iter().copied().sum::<F>() / nf;
        if p == 0 {
            return LinearModel::constant(y_mean, 0);
        }

        let mut means = vec![F::zero(); p];
        for row in xs {
            for (m, &v) in means.iter_mut().zip(row.iter()) {
                *m = *m + v;
            }
        }
        for m in &mut means {
            *m = *m / nf;
        }
        // column-major centered design
        let mut a: Vec<Vec<F>> = (0..p)
            .map(|j| xs.iter().map(|row| row[j] - means[j]).collect())
            .collect();
        let mut scales = vec![F::zero(); p];
        for (j, col) in a.iter_mut().enumerate() {
            let norm = col.iter().map(|&v| v * v).sum::<F>().sqrt();
            scales[j] = norm;
            if norm > F::zero() {
                for v in col.iter_mut() {
                    *v = *v / norm;
                }
            }
        }
        let mut b: Vec<F> = ys.iter().map(|&y| y - y_mean).collect();

        let tol = F::rank_tolerance();
        let mut perm: Vec<usize> = (0..p).collect();
        let mut rank = 0;
        for k in 0..p.min(n) {
            // pivot on the largest remaining column norm
            let (best, best_norm) = (k..p)
                .map(|j| (j, a[j][k..].iter().map(|&v| v * v).sum::<F>()))
                .fold((k, F::neg_infinity()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if best_norm.sqrt() <= tol {
                break;
            }
            a.swap(k, best);
            perm.swap(k, best);

            let norm = best_norm.sqrt();
            let alpha = if a[k][k] > F::zero() { -norm } else { norm };
            let mut v: Vec<F> = a[k][k..].to_vec();
            v[0] = v[0] - alpha;
            let vnorm2 = v.iter().map(|&x| x * x).sum::<F>();
            if vnorm2 > F::zero() {
                let two = F::of(2.0);
                for col in a.iter_mut().skip(k) {
                    let dot = v.iter().zip(&col[k..]).map(|(&x, &y)| x * y).sum::<F>();
                    let f = two * dot / vnorm2;
                    for (c, &vi) in col[k..].iter_mut().zip(&v) {
                        *c = *c - f * vi;
                    }
                }
                let dot = v.iter().zip(&b[k..]).map(|(&x, &y)| x * y).sum::<F>();
                let f = two * dot / vnorm2;
                for (c, &vi) in b[k..].iter_mut().zip(&v) {
                    *c = *c - f * vi;
                }
            }
            rank = k + 1;
        }

        // back substitution on the leading rank x rank block
        let mut beta_perm = vec![F::zero(); rank];
        for i in (0..rank).rev() {
            let mut s = b[i];
            for (j, &bj) in beta_perm.iter().enumerate().skip(i + 1) {
                s = s - a[j][i] * bj;
            }
            beta_perm[i] = s / a[i][i];
        }
        let mut coefs = vec![F::zero(); p];
        for (i, &bv) in beta_perm.iter().enumerate() {
            let j = perm[i];
            coefs[j] = bv / scales[j];
        }
        if coefs.iter().any(|c| !c.is_finite()) {
            return LinearModel::constant(y_mean, p);
        }
        let intercept = coefs
            .iter()
            .zip(&means)
            .fold(y_mean, |acc, (&c, &m)| acc - c * m);
        LinearModel { intercept, coefs }
    }
}

/// Global linear cost model over `features ++ knob values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LinearCostModel<F: Scalar> {
    pub space: KnobSpace<F>,
    pub model: LinearModel<F>,
}

/// Global linear fitness model over `knob values ++ [epsilon]`, clamped to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LinearFitnessModel<F: Scalar> {
    pub space: KnobSpace<F>,
    pub model: LinearModel<F>,
}

/// Regression row for a cost model: input features followed by knob values.
pub fn cost_row<F: Scalar>(space: &KnobSpace<F>, features: &InputFeatures<F>, setting: &KnobSetting) -> Vec<F> {
    let mut row = features.0.clone();
    row.extend(space.values(setting));
    row
}

pub(crate) fn check_points<F: Scalar>(points: &[(Vec<F>, F)], min: usize) -> Result<()> {
    if points.len() < min {
        return Err(Error::Model(format!(
            "need at least {min} training points, have {}",
            points.len()
        )));
    }
    let dim = points[0].0.len();
    if points.iter().any(|(x, _)| x.len() != dim) {
        return Err(Error::Model("training rows differ in dimension".into()));
    }
    if points
        .iter()
        .any(|(x, y)| !y.is_finite() || x.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Model("non-finite training value".into()));
    }
    Ok(())
}

/// Fits the global least-squares model used as the comparison baseline.
pub fn train_linear_baseline<F: Scalar>(points: &[(Vec<F>, F)]) -> Result<LinearModel<F>> {
    let dim = points.first().map_or(0, |p| p.0.len());
    check_points(points, dim + 1)?;
    let xs: Vec<&[F]> = points.iter().map(|p| p.0.as_slice()).collect();
    let ys: Vec<F> = points.iter().map(|p| p.1).collect();
    Ok(LinearModel::fit(&xs, &ys))
}

impl<F: Scalar> LinearCostModel<F> {
    pub fn train(train: &crate::dataset::Dataset<F>) -> Result<Self> {
        Ok(LinearCostModel {
            space: train.space().clone(),
            model: train_linear_baseline(&super::tree::cost_points(train))?,
        })
    }
}

impl<F: Scalar> LinearFitnessModel<F> {
    /// Fits the table's `(knob values ++ [epsilon], fitness)` entries.
    pub fn from_table(table: &super::FitnessTable<F>) -> Result<Self> {
        let mut points = Vec::with_capacity(table.rows.len() * table.epsilon_grid.len());
        for (setting, row) in &table.rows {
            let values = table.space.values(setting);
            for (&eps, &v) in table.epsilon_grid.iter().zip(row) {
                let mut x = values.clone();
                x.push(eps);
                points.push((x, v));
            }
        }
        Ok(LinearFitnessModel {
            space: table.space.clone(),
            model: train_linear_baseline(&points)?,
        })
    }
}

impl<F: Scalar> CostModel<F> for LinearCostModel<F> {
    fn predict_cost(&self, features: &InputFeatures<F>, setting: &KnobSetting) -> F {
        self.model
            .predict(&cost_row(&self.space, features, setting))
            .max(F::of(COST_FLOOR))
    }
}

impl<F: Scalar> FitnessModel<F> for LinearFitnessModel<F> {
    fn fitness(&self, epsilon: F, setting: &KnobSetting) -> F {
        let mut row = self.space.values(setting);
        row.push(epsilon);
        let v = self.model.predict(&row);
        if v.is_nan() {
            F::zero()
        } else {
            v.max(F::zero()).min(F::one())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(points: &[(Vec<f64>, f64)]) -> LinearModel<f64> {
        train_linear_baseline(points).unwrap()
    }

    #[test]
    fn recovers_exact_linear_coefficients() {
        let points: Vec<_> = (0..30)
            .map(|i| {
                let x = vec![i as f64, ((i * 7) % 11) as f64, ((i * 3) % 5) as f64 * 100.0];
                let y = 2.5 + 1.5 * x[0] - 0.25 * x[1] + 0.003 * x[2];
                (x, y)
            })
            .collect();
        let m = fit(&points);
        assert!((m.intercept - 2.5).abs() < 1e-6);
        for (c, want) in m.coefs.iter().zip([1.5, -0.25, 0.003]) {
            assert!((c - want).abs() < 1e-6, "{c} vs {want}");
        }
    }

    #[test]
    fn constant_targets_give_intercept_only() {
        let points: Vec<_> = (0..10).map(|i| (vec![i as f64, (i * i) as f64], 4.0)).collect();
        let m = fit(&points);
        assert_eq!(m.coefs, vec![0.0, 0.0]);
        assert!((m.intercept - 4.0).abs() < 1e-12);
        assert_eq!(m.n_params(), 1);
    }

    #[test]
    fn collinear_columns_are_dropped_not_fatal() {
        // second column duplicates the first, third is constant
        let points: Vec<_> = (0..8)
            .map(|i| (vec![i as f64, 2.0 * i as f64, 5.0], 1.0 + 3.0 * i as f64))
            .collect();
        let m = fit(&points);
        for (x, y) in &points {
            assert!((m.predict(x) - y).abs() < 1e-9);
        }
        assert_eq!(m.coefs[2], 0.0);
    }

    #[test]
    fn single_point_is_mean() {
        let m = LinearModel::fit(&[&[3.0f64, 4.0][..]], &[7.0]);
        assert_eq!(m.predict(&[100.0, -3.0]), 7.0);
    }

    #[test]
    fn too_few_points_is_an_error() {
        assert!(train_linear_baseline(&[(vec![1.0f64, 2.0], 1.0)]).is_err());
    }

    #[test]
    fn works_in_f32() {
        let points: Vec<(Vec<f32>, f32)> = (0..20)
            .map(|i| (vec![i as f32], 1.0 + 0.5 * i as f32))
            .collect();
        let m = train_linear_baseline(&points).unwrap();
        assert!((m.coefs[0] - 0.5).abs() < 1e-4);
    }
}
