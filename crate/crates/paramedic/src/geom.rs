//! Scalar-generic vector geometry used by the detectors and the simulator.
//!
//! Everything here is generic over [`Real`] so the math works with `f32` or
//! `f64`; the rest of the crate uses the concrete [`crate::Scalar`] alias.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use num_traits::{Float, FromPrimitive};
use serde::de::{SeqAccess, Visitor};
use serde::ser::SerializeTuple;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real: Float + FromPrimitive + Debug + Default + Send + Sync + 'static {
    /// Conversion from an `f64` literal (thresholds, constants).
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable")
    }
}

impl<T: Float + FromPrimitive + Debug + Default + Send + Sync + 'static> Real for T {}

/// A 3-vector in the local ground-fixed frame (x east, y north, z up).
///
/// Serializes as a 3-element JSON array `[x, y, z]`.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct Vector3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Debug> Debug for Vector3<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({:?}, {:?}, {:?})", self.x, self.y, self.z)
    }
}

impl<T: Real> Vector3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Self) -> Self {
        Self::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn distance(self, other: Self) -> T {
        (self - other).norm()
    }

    /// Unit vector in the same direction, or zero if the norm underflows.
    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n > T::zero() {
            self / n
        } else {
            Self::zero()
        }
    }

    /// Horizontal (xy-plane) left-hand perpendicular, normalized.
    /// Zero for vertical vectors.
    pub fn horizontal_perp(self) -> Self {
        Vector3::new(-self.y, self.x, T::zero()).normalized()
    }
}

impl<T: Real> Add for Vector3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vector3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vector3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> SubAssign for Vector3<T> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Mul<T> for Vector3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vector3<T> {
    type Output = Self;
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<T: Real> Neg for Vector3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Serialize> Serialize for Vector3<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut tup = serializer.serialize_tuple(3)?;
        tup.serialize_element(&self.x)?;
        tup.serialize_element(&self.y)?;
        tup.serialize_element(&self.z)?;
        tup.end()
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Vector3<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V3Visitor<T>(std::marker::PhantomData<T>);

        impl<'de, T: Deserialize<'de>> Visitor<'de> for V3Visitor<T> {
            type Value = Vector3<T>;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a 3-element array [x, y, z]")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Self::Value, A::Error> {
                let x = seq
                    .next_element()?
                    .ok_or_else(|| serde::de::Error::invalid_length(0, &self))?;
                let y = seq
                    .next_element()?
                    .ok_or_else(|| serde::de::Error::invalid_length(1, &self))?;
                let z = seq
                    .next_element()?
                    .ok_or_else(|| serde::de::Error::invalid_length(2, &self))?;
                if seq.next_element::<serde::de::IgnoredAny>()?.is_some() {
                    return Err(serde::de::Error::invalid_length(4, &self));
                }
                Ok(Vector3 { x, y, z })
            }
        }

        deserializer.deserialize_tuple(3, V3Visitor(std::marker::PhantomData))
    }
}

/// Perpendicular distance from point `p` to the trajectory leg `a`→`b`,
/// computed as the height of the triangle (a, b, p) over base ab via Heron's
/// formula: with side lengths |pa|, |pb|, |ab| and semi-perimeter s, the area
/// is sqrt(s(s-|pa|)(s-|pb|)(s-|ab|)) and the height is 2*area/|ab|.
///
/// A degenerate leg (|ab| below 1e-9) returns |pa|. A radicand driven
/// negative by floating-point noise is clamped to zero.
pub fn point_to_leg_distance<T: Real>(p: Vector3<T>, a: Vector3<T>, b: Vector3<T>) -> T {
    let len_pa = p.distance(a);
    let len_pb = p.distance(b);
    let len_ab = a.distance(b);
    if len_ab < T::c(1e-9) {
        return len_pa;
    }
    let two = T::c(2.0);
    let s = (len_pa + len_pb + len_ab) / two;
    let radicand = s * (s - len_pa) * (s - len_pb) * (s - len_ab);
    let area = radicand.max(T::zero()).sqrt();
    two * area / len_ab
}
