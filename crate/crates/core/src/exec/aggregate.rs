//! Mergeable aggregate accumulators.

use crate::expr::{AggFunc, EvalError};
use crate::numeric::ExactSum;
use crate::types::{ColumnType, Value};

/// Running state of one aggregate. Merging is exact, so partial results can
/// be combined in any order with identical output.
#[derive(Debug, Clone)]
pub enum Accumulator {
    Count(i64),
    Sum {
        int: i128,
        float: ExactSum,
        seen: bool,
    },
    Avg {
        int: i128,
        float: ExactSum,
        n: i64,
    },
    Min(Option<Value>),
    Max(Option<Value>),
}

impl Accumulator {
    pub fn new(func: AggFunc) -> Self {
        match func {
            AggFunc::Count => Accumulator::Count(0),
            AggFunc::Sum => Accumulator::Sum {
                int: 0,
                float: ExactSum::new(),
                seen: false,
            },
            AggFunc::Avg => Accumulator::Avg {
                int: 0,
                float: ExactSum::new(),
                n: 0,
            },
            AggFunc::Min => Accumulator::Min(None),
            AggFunc::Max => Accumulator::Max(None),
        }
    }

    /// Adds one input. `None` stands for a `COUNT(*)` row.
    pub fn update(&mut self, v: Option<&Value>) {
        let Some(v) = v else {
            if let Accumulator::Count(c) = self {
                *c += 1;
            }
            return;
        };
        if v.is_null() {
            return;
        }
        match self {
            Accumulator::Count(c) => *c += 1,
            Accumulator::Sum { int, float, seen } => {
                *seen = true;
                match v {
                    Value::Int64(i) => *int += i128::from(*i),
                    Value::Float64(f) => float.add(*f),
                    _ => {}
                }
            }
            Accumulator::Avg { int, float, n } => {
                *n += 1;
                match v {
                    Value::Int64(i) => *int += i128::from(*i),
                    Value::Float64(f) => float.add(*f),
                    _ => {}
                }
            }
            Accumulator::Min(m) => {
                if m.as_ref().is_none_or(|cur| v.total_cmp(cur).is_lt()) {
                    *m = Some(v.clone());
                }
            }
            Accumulator::Max(m) => {
                if m.as_ref().is_none_or(|cur| v.total_cmp(cur).is_gt()) {
                    *m = Some(v.clone());
                }
            }
        }
    }

    pub fn merge(&mut self, other: &Accumulator) {
        match (self, other) {
            (Accumulator::Count(a), Accumulator::Count(b)) => *a += b,
            (
                Accumulator::Sum { int, float, seen },
                Accumulator::Sum {
                    int: i2,
                    float: f2,
                    seen: s2,
                },
            ) => {
                *int += i2;
                float.merge(f2);
                *seen |= s2;
            }
            (
                Accumulator::Avg { int, float, n },
                Accumulator::Avg {
                    int: i2,
                    float: f2,
                    n: n2,
                },
            ) => {
                *int += i2;
                float.merge(f2);
                *n += n2;
            }
            (Accumulator::Min(a), Accumulator::Min(Some(b))) => {
                if a.as_ref().is_none_or(|cur| b.total_cmp(cur).is_lt()) {
                    *a = Some(b.clone());
                }
            }
            (Accumulator::Max(a), Accumulator::Max(Some(b))) => {
                if a.as_ref().is_none_or(|cur| b.total_cmp(cur).is_gt()) {
                    *a = Some(b.clone());
                }
            }
            (Accumulator::Min(_), Accumulator::Min(None))
            | (Accumulator::Max(_), Accumulator::Max(None)) => {}
            _ => panic!("merging accumulators of different functions"),
        }
    }

    /// Final value for an aggregate whose declared output type is `ty`.
    pub fn finish(&self, ty: ColumnType) -> Result<Value, EvalError> {
        Ok(match self {
            Accumulator::Count(c) => Value::Int64(*c),
            Accumulator::Sum { seen: false, .. } | Accumulator::Avg { n: 0, .. } => Value::Null,
            Accumulator::Sum { int, float, .. } => match ty {
                ColumnType::Int64 => {
                    Value::Int64(i64::try_from(*int).map_err(|_| EvalError::Overflow("SUM"))?)
                }
                _ => Value::Float64(float.value() + *int as f64),
            },
            Accumulator::Avg { int, float, n } => {
                Value::Float64((float.value() + *int as f64) / *n as f64)
            }
            Accumulator::Min(m) | Accumulator::Max(m) => m.clone().unwrap_or(Value::Null),
        })
    }
}
