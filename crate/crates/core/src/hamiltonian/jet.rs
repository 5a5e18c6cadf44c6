//! First-order forward-mode jets over the variables `(x_1..x_d, p_1..p_d, u)`.
//!
//! A jet carries a value and its exact partial derivatives; the chain rule
//! is applied per operation, so derivatives have no truncation error beyond
//! floating point.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::geometry::MAX_DIM;

/// Value of `H` together with its first derivatives at a point
/// `(x, p, u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JetValue {
    pub value: f64,
    pub d_x: [f64; MAX_DIM],
    pub d_p: [f64; MAX_DIM],
    pub d_u: f64,
}

impl JetValue {
    pub fn constant(value: f64) -> Self {
        Self {
            value,
            d_x: [0.0; MAX_DIM],
            d_p: [0.0; MAX_DIM],
            d_u: 0.0,
        }
    }

    /// Seed for the coordinate variable `x_axis`.
    pub fn var_x(axis: usize, value: f64) -> Self {
        let mut j = Self::constant(value);
        j.d_x[axis] = 1.0;
        j
    }

    /// Seed for the momentum variable `p_axis`.
    pub fn var_p(axis: usize, value: f64) -> Self {
        let mut j = Self::constant(value);
        j.d_p[axis] = 1.0;
        j
    }

    /// Seed for the value variable `u`.
    pub fn var_u(value: f64) -> Self {
        let mut j = Self::constant(value);
        j.d_u = 1.0;
        j
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.d_x.iter().all(|v| v.is_finite())
            && self.d_p.iter().all(|v| v.is_finite())
            && self.d_u.is_finite()
    }

    fn map_derivs(self, scale: f64) -> Self {
        Self {
            value: self.value,
            d_x: [self.d_x[0] * scale, self.d_x[1] * scale],
            d_p: [self.d_p[0] * scale, self.d_p[1] * scale],
            d_u: self.d_u * scale,
        }
    }

    fn with_value(self, value: f64) -> Self {
        Self { value, ..self }
    }

    pub fn sin(self) -> Self {
        self.map_derivs(self.value.cos()).with_value(self.value.sin())
    }

    pub fn cos(self) -> Self {
        self.map_derivs(-self.value.sin()).with_value(self.value.cos())
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        self.map_derivs(e).with_value(e)
    }

    /// Integer power; `k` may be negative (poles produce non-finite jets,
    /// which evaluation reports).
    pub fn powi(self, k: i32) -> Self {
        if k == 0 {
            return Self::constant(1.0);
        }
        let scale = k as f64 * self.value.powi(k - 1);
        self.map_derivs(scale).with_value(self.value.powi(k))
    }

    pub fn scale(self, c: f64) -> Self {
        self.map_derivs(c).with_value(self.value * c)
    }
}

impl Add for JetValue {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            value: self.value + rhs.value,
            d_x: [self.d_x[0] + rhs.d_x[0], self.d_x[1] + rhs.d_x[1]],
            d_p: [self.d_p[0] + rhs.d_p[0], self.d_p[1] + rhs.d_p[1]],
            d_u: self.d_u + rhs.d_u,
        }
    }
}

impl Sub for JetValue {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self {
            value: self.value - rhs.value,
            d_x: [self.d_x[0] - rhs.d_x[0], self.d_x[1] - rhs.d_x[1]],
            d_p: [self.d_p[0] - rhs.d_p[0], self.d_p[1] - rhs.d_p[1]],
            d_u: self.d_u - rhs.d_u,
        }
    }
}

impl Mul for JetValue {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let a = self.value;
        let b = rhs.value;
        Self {
            value: a * b,
            d_x: [
                self.d_x[0] * b + a * rhs.d_x[0],
                self.d_x[1] * b + a * rhs.d_x[1],
            ],
            d_p: [
                self.d_p[0] * b + a * rhs.d_p[0],
                self.d_p[1] * b + a * rhs.d_p[1],
            ],
            d_u: self.d_u * b + a * rhs.d_u,
        }
    }
}

impl Div for JetValue {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let b = rhs.value;
        let inv = 1.0 / b;
        let q = self.value * inv;
        Self {
            value: q,
            d_x: [
                (self.d_x[0] - q * rhs.d_x[0]) * inv,
                (self.d_x[1] - q * rhs.d_x[1]) * inv,
            ],
            d_p: [
                (self.d_p[0] - q * rhs.d_p[0]) * inv,
                (self.d_p[1] - q * rhs.d_p[1]) * inv,
            ],
            d_u: (self.d_u - q * rhs.d_u) * inv,
        }
    }
}

impl Neg for JetValue {
    type Output = Self;
    fn neg(self) -> Self {
        self.map_derivs(-1.0).with_value(-self.value)
    }
}
