//! Adaptive-moment optimizer with lazy row updates for the embedding tables.
//!
//! Weight matrices get the standard dense update. Table rows are updated only
//! when they appear in the gradient's row list; rows that were not read in a
//! step keep both their values and their moments.

use ndarray::{Array2, ArrayView1, ArrayViewMut1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Gradients, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient added to the gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First and second moment buffers, shaped like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m_source0: Array2<f64>,
    pub v_source0: Array2<f64>,
    pub m_target0: Array2<f64>,
    pub v_target0: Array2<f64>,
    /// Per layer `[m_ws, v_ws, m_wt, v_wt]`.
    pub layers: Vec<[Array2<f64>; 4]>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let z = |a: &Array2<f64>| Array2::zeros(a.dim());
        AdamState {
            step: 0,
            m_source0: z(&params.source0),
            v_source0: z(&params.source0),
            m_target0: z(&params.target0),
            v_target0: z(&params.target0),
            layers: params
                .layers
                .iter()
                .map(|l| [z(&l.ws), z(&l.ws), z(&l.wt), z(&l.wt)])
                .collect(),
        }
    }

    /// One update. Fails without touching anything if a gradient entry is
    /// non-finite.
    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients, cfg: &AdamConfig) -> Result<()> {
        if let Some(group) = grads.first_non_finite() {
            return Err(Error::NonFiniteGradient(group.into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let update = |p: ArrayViewMut1<f64>, m: ArrayViewMut1<f64>, v: ArrayViewMut1<f64>, g: ArrayView1<f64>| {
            Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                let g = g + cfg.weight_decay * *p;
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                *p -= cfg.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + cfg.eps);
            });
        };

        if !params.tables_frozen {
            let tables = [
                (&mut params.source0, &mut self.m_source0, &mut self.v_source0, &grads.source_rows, &grads.source0),
                (&mut params.target0, &mut self.m_target0, &mut self.v_target0, &grads.target_rows, &grads.target0),
            ];
            for (p, m, v, rows, g) in tables {
                for (i, &r) in rows.iter().enumerate() {
                    let r = r as usize;
                    update(p.row_mut(r), m.row_mut(r), v.row_mut(r), g.row(i));
                }
            }
        }
        for ((layer, moments), (g_ws, g_wt)) in params.layers.iter_mut().zip(&mut self.layers).zip(&grads.layers) {
            let [m_ws, v_ws, m_wt, v_wt] = moments;
            for (p, m, v, g) in [(&mut layer.ws, m_ws, v_ws, g_ws), (&mut layer.wt, m_wt, v_wt, g_wt)] {
                let g = g.view().into_shape_with_order(g.len()).expect("contiguous");
                update(flat(p), flat(m), flat(v), g);
            }
        }
        Ok(())
    }
}

fn flat(a: &mut Array2<f64>) -> ArrayViewMut1<'_, f64> {
    let len = a.len();
    a.view_mut().into_shape_with_order(len).expect("contiguous")
}

/// One optimizer step over `params` with the given gradients.
pub fn adam_step(
    params: &mut ModelParams,
    state: &mut AdamState,
    grads: &Gradients,
    cfg: &AdamConfig,
) -> Result<()> {
    state.step(params, grads, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeId;
    use crate::model::{init_model, Activation, AggregationMode, ModelConfig};

    fn params() -> ModelParams {
        init_model(
            &ModelConfig {
                num_nodes: 4,
                dim: 2,
                layers: 1,
                mode: AggregationMode::Full,
                activation: Activation::Relu,
                project_features: false,
                freeze_tables: false,
            },
            None,
            3,
        )
        .unwrap()
    }

    fn grads_like(p: &ModelParams, rows: Vec<NodeId>, value: f64) -> Gradients {
        Gradients {
            source0: Array2::from_elem((rows.len(), p.dim()), value),
            target0: Array2::from_elem((rows.len(), p.dim()), value),
            source_rows: rows.clone(),
            target_rows: rows,
            layers: p
                .layers
                .iter()
                .map(|l| (Array2::from_elem(l.ws.dim(), value), Array2::from_elem(l.wt.dim(), value)))
                .collect(),
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = params();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let g = grads_like(&p, vec![0, 1, 2, 3], 0.0);
        for _ in 0..5 {
            st.step(&mut p, &g, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let mut p = params();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig::default();
        let g = grads_like(&p, vec![1], -0.37);
        st.step(&mut p, &g, &cfg).unwrap();
        let expected = cfg.learning_rate * 0.37 / (0.37 + cfg.eps);
        let delta = p.layers[0].ws[[0, 0]] - before.layers[0].ws[[0, 0]];
        assert!((delta - expected).abs() < 1e-15);
        let row = p.source0[[1, 0]] - before.source0[[1, 0]];
        assert!((row - expected).abs() < 1e-15);
        // Untouched rows stay put.
        assert_eq!(p.source0.row(0), before.source0.row(0));
        assert_eq!(p.target0.row(3), before.target0.row(3));
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let mut p = params();
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig::default();
        let g = grads_like(&p, vec![0], 2.5);
        let mut prev = p.layers[0].wt[[1, 1]];
        let mut step = 0.0;
        for _ in 0..2000 {
            st.step(&mut p, &g, &cfg).unwrap();
            step = prev - p.layers[0].wt[[1, 1]];
            prev = p.layers[0].wt[[1, 1]];
        }
        assert!((step - cfg.learning_rate).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_rejected_untouched() {
        let mut p = params();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let mut g = grads_like(&p, vec![0], 1.0);
        g.layers[0].1[[0, 0]] = f64::NAN;
        assert!(matches!(
            st.step(&mut p, &g, &AdamConfig::default()),
            Err(Error::NonFiniteGradient(_))
        ));
        assert_eq!(p, before);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn frozen_tables_not_updated() {
        let mut p = params();
        p.tables_frozen = true;
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let g = grads_like(&p, vec![0, 1], 1.0);
        st.step(&mut p, &g, &AdamConfig::default()).unwrap();
        assert_eq!(p.source0, before.source0);
        assert_ne!(p.layers, before.layers);
    }
}
