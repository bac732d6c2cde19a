//! Elementwise ops, biases, activations, dropout.

use rand::Rng;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{Graph, Var};

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

impl<T: Scalar> Graph<T> {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a).clone(), self.value(b).clone());
        same_shape("add", &ta, &tb)?;
        let data = ta.data().iter().zip(tb.data().iter()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push_op(value, &[a, b], move |dy| {
            vec![(a.0, dy.clone()), (b.0, dy.clone())]
        }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a).clone(), self.value(b).clone());
        same_shape("sub", &ta, &tb)?;
        let data = ta.data().iter().zip(tb.data().iter()).map(|(&x, &y)| x - y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push_op(value, &[a, b], move |dy| {
            vec![(a.0, dy.clone()), (b.0, dy.map(|g| -g))]
        }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a).clone(), self.value(b).clone());
        same_shape("mul", &ta, &tb)?;
        let data = ta.data().iter().zip(tb.data().iter()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push_op(value, &[a, b], move |dy| {
            let da = dy.data().iter().zip(tb.data().iter()).map(|(&g, &y)| g * y).collect();
            let db = dy.data().iter().zip(ta.data().iter()).map(|(&g, &x)| g * x).collect();
            vec![
                (a.0, Tensor::new(tb.shape().to_vec(), da).unwrap()),
                (b.0, Tensor::new(ta.shape().to_vec(), db).unwrap()),
            ]
        }))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let tx = self.value(x).clone();
        let value = tx.map(|v| v * c);
        Ok(self.push_op(value, &[x], move |dy| vec![(x.0, dy.map(|g| g * c))]))
    }

    pub fn add_const(&mut self, x: Var, c: T) -> Result<Var> {
        let tx = self.value(x).clone();
        let value = tx.map(|v| v + c);
        Ok(self.push_op(value, &[x], move |dy| vec![(x.0, dy.clone())]))
    }

    /// Broadcast-adds a bias over the trailing axis: `[.., D] + [D]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x).clone(), self.value(b).clone());
        let d = *tx.shape().last().unwrap_or(&0);
        if tb.rank() != 1 || tb.shape()[0] != d {
            return Err(TensorError::shape("add_bias", format!("{:?} + {:?}", tx.shape(), tb.shape())));
        }
        let data = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + tb.data()[i % d])
            .collect();
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push_op(value, &[x, b], move |dy| {
            let mut db = vec![T::zero(); d];
            for (i, &g) in dy.data().iter().enumerate() {
                db[i % d] += g;
            }
            vec![(x.0, dy.clone()), (b.0, Tensor::new(vec![d], db).unwrap())]
        }))
    }

    /// tanh-approximation GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x).clone();
        let value = tx.map(|v| gelu_fwd(v));
        Ok(self.push_op(value, &[x], move |dy| {
            let dx = dy
                .data()
                .iter()
                .zip(tx.data().iter())
                .map(|(&g, &v)| g * gelu_grad(v))
                .collect();
            vec![(x.0, Tensor::new(tx.shape().to_vec(), dx).unwrap())]
        }))
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x).clone();
        let value = tx.map(|v| v.abs());
        Ok(self.push_op(value, &[x], move |dy| {
            let dx = dy
                .data()
                .iter()
                .zip(tx.data().iter())
                .map(|(&g, &v)| {
                    if v > T::zero() {
                        g
                    } else if v < T::zero() {
                        -g
                    } else {
                        T::zero()
                    }
                })
                .collect();
            vec![(x.0, Tensor::new(tx.shape().to_vec(), dx).unwrap())]
        }))
    }

    /// Clips to `[0, 1]` with subgradient zero outside the open interval.
    pub fn clamp01(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x).clone();
        let value = tx.map(|v| v.max(T::zero()).min(T::one()));
        Ok(self.push_op(value, &[x], move |dy| {
            let dx = dy
                .data()
                .iter()
                .zip(tx.data().iter())
                .map(|(&g, &v)| if v > T::zero() && v < T::one() { g } else { T::zero() })
                .collect();
            vec![(x.0, Tensor::new(tx.shape().to_vec(), dx).unwrap())]
        }))
    }

    /// `x^p` for non-negative inputs; gradient is zero where `x <= 0`.
    pub fn pow_const(&mut self, x: Var, p: f64) -> Result<Var> {
        let tx = self.value(x).clone();
        let pe = T::from_f64(p);
        let value = tx.map(|v| if v > T::zero() { v.powf(pe) } else { T::zero() });
        Ok(self.push_op(value, &[x], move |dy| {
            let dx = dy
                .data()
                .iter()
                .zip(tx.data().iter())
                .map(|(&g, &v)| {
                    if v > T::zero() {
                        g * pe * v.powf(pe - T::one())
                    } else {
                        T::zero()
                    }
                })
                .collect();
            vec![(x.0, Tensor::new(tx.shape().to_vec(), dx).unwrap())]
        }))
    }

    /// Inverted dropout; identity when not training or `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var> {
        if !self.training() || p == 0.0 {
            return Ok(x);
        }
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::invalid("dropout", format!("p = {p}")));
        }
        let tx = self.value(x).clone();
        let keep = T::from_f64(1.0 / (1.0 - p));
        let mask: Vec<T> = {
            let rng = self.rng();
            (0..tx.len())
                .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
                .collect()
        };
        let data = tx.data().iter().zip(mask.iter()).map(|(&v, &m)| v * m).collect();
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push_op(value, &[x], move |dy| {
            let dx = dy.data().iter().zip(mask.iter()).map(|(&g, &m)| g * m).collect();
            vec![(x.0, Tensor::new(dy.shape().to_vec(), dx).unwrap())]
        }))
    }

    /// Blocks gradient flow; forward value passes through unchanged.
    pub fn stop_grad(&mut self, x: Var) -> Var {
        let tx = self.value(x).clone();
        self.constant(tx)
    }
}

fn gelu_fwd<T: Scalar>(v: T) -> T {
    let half = T::from_f64(0.5);
    half * v * (T::one() + inner_tanh(v))
}

fn gelu_grad<T: Scalar>(v: T) -> T {
    let half = T::from_f64(0.5);
    let c = T::from_f64(0.7978845608028654); // sqrt(2/pi)
    let a = T::from_f64(0.044715);
    let three = T::from_f64(3.0);
    let t = inner_tanh(v);
    let sech2 = T::one() - t * t;
    half * (T::one() + t) + half * v * sech2 * c * (T::one() + three * a * v * v)
}

fn inner_tanh<T: Scalar>(v: T) -> T {
    let c = T::from_f64(0.7978845608028654);
    let a = T::from_f64(0.044715);
    (c * (v + a * v * v * v)).tanh()
}
