use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array2;

use super::grid::{
    argmax, build_grid_classifier, build_regressor, center_of_mass, zone_of, GridSpec, ZoneIndex,
};
use super::keypad::{build_keypad_classifier, keypad_label, KeypadLayout, KEYPAD_CLASSES};
use super::LocError;
use crate::dsp::Domain;
use crate::neural::{NetSpec, Targets};
use crate::Point;

/// A decoded network output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    Position(Point),
    /// Grid zone: 0-based flat class and the zone centre.
    Zone {
        class: usize,
        center: Point,
    },
    /// Keypad class 1..=13.
    Key(usize),
}

impl Prediction {
    pub fn position(&self) -> Option<Point> {
        match *self {
            Prediction::Position(p) | Prediction::Zone { center: p, .. } => Some(p),
            Prediction::Key(_) => None,
        }
    }

    /// 0-based class index for classifier outputs.
    pub fn class(&self) -> Option<usize> {
        match *self {
            Prediction::Position(_) => None,
            Prediction::Zone { class, .. } => Some(class),
            Prediction::Key(label) => Some(label - 1),
        }
    }
}

/// Everything a task needs beyond its own parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskContext {
    pub plate_width_cm: f64,
    pub plate_height_cm: f64,
    pub keypad: KeypadLayout,
}

impl Default for TaskContext {
    fn default() -> Self {
        Self {
            plate_width_cm: 20.0,
            plate_height_cm: 20.0,
            keypad: KeypadLayout::default(),
        }
    }
}

/// One way of turning features into a touch estimate: the network shape,
/// the training targets and the decoder of its outputs.
pub trait LocalizationTask: fmt::Debug + Send + Sync {
    /// Registry spelling, e.g. `grid:10`.
    fn name(&self) -> String;
    fn net_spec(&self, domain: Domain) -> Result<NetSpec, LocError>;
    fn targets(&self, positions: &[Point]) -> Result<Targets, LocError>;
    fn decode(&self, output: &[f64]) -> Result<Prediction, LocError>;
    /// Class count for classifiers.
    fn classes(&self) -> Option<usize> {
        None
    }
    /// Ground-truth 0-based class for classifiers.
    fn true_class(&self, _t: Point) -> Result<Option<usize>, LocError> {
        Ok(None)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridTask {
    pub grid: GridSpec,
}

impl LocalizationTask for GridTask {
    fn name(&self) -> String {
        format!("grid:{}", self.grid.n)
    }

    fn net_spec(&self, domain: Domain) -> Result<NetSpec, LocError> {
        Ok(build_grid_classifier(&self.grid, domain))
    }

    fn targets(&self, positions: &[Point]) -> Result<Targets, LocError> {
        positions
            .iter()
            .map(|&t| Ok(zone_of(t, &self.grid)?.flat(self.grid.n)))
            .collect::<Result<_, _>>()
            .map(Targets::Classes)
    }

    fn decode(&self, output: &[f64]) -> Result<Prediction, LocError> {
        let center = super::grid::decode_classification(output, &self.grid)?;
        let class = argmax(output);
        debug_assert_eq!(
            center,
            center_of_mass(ZoneIndex::from_flat(class, self.grid.n), &self.grid)
        );
        Ok(Prediction::Zone { class, center })
    }

    fn classes(&self) -> Option<usize> {
        Some(self.grid.classes())
    }

    fn true_class(&self, t: Point) -> Result<Option<usize>, LocError> {
        Ok(Some(zone_of(t, &self.grid)?.flat(self.grid.n)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegressionTask;

impl LocalizationTask for RegressionTask {
    fn name(&self) -> String {
        "regression".into()
    }

    fn net_spec(&self, domain: Domain) -> Result<NetSpec, LocError> {
        Ok(build_regressor(domain))
    }

    fn targets(&self, positions: &[Point]) -> Result<Targets, LocError> {
        let mut v = Array2::zeros((positions.len(), 2));
        for (r, p) in positions.iter().enumerate() {
            v[[r, 0]] = p[0];
            v[[r, 1]] = p[1];
        }
        Ok(Targets::Values(v))
    }

    fn decode(&self, output: &[f64]) -> Result<Prediction, LocError> {
        match output {
            [x, y] if x.is_finite() && y.is_finite() => Ok(Prediction::Position([*x, *y])),
            _ => Err(LocError::BadScores(format!(
                "regressor output {output:?} is not a finite 2-vector"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeypadTask {
    pub layout: KeypadLayout,
}

impl LocalizationTask for KeypadTask {
    fn name(&self) -> String {
        "keypad".into()
    }

    fn net_spec(&self, domain: Domain) -> Result<NetSpec, LocError> {
        if domain != Domain::Frequency {
            return Err(LocError::UnsupportedDomain {
                task: self.name(),
                domain: domain.to_string(),
            });
        }
        build_keypad_classifier(&self.layout)
    }

    fn targets(&self, positions: &[Point]) -> Result<Targets, LocError> {
        positions
            .iter()
            .map(|&t| Ok(keypad_label(t, &self.layout)? - 1))
            .collect::<Result<_, _>>()
            .map(Targets::Classes)
    }

    fn decode(&self, output: &[f64]) -> Result<Prediction, LocError> {
        if output.len() != KEYPAD_CLASSES || output.iter().any(|s| !s.is_finite()) {
            return Err(LocError::BadScores(format!(
                "expected {KEYPAD_CLASSES} finite keypad scores"
            )));
        }
        Ok(Prediction::Key(argmax(output) + 1))
    }

    fn classes(&self) -> Option<usize> {
        Some(KEYPAD_CLASSES)
    }

    fn true_class(&self, t: Point) -> Result<Option<usize>, LocError> {
        Ok(Some(keypad_label(t, &self.layout)? - 1))
    }
}

type Factory = Box<
    dyn Fn(Option<&str>, &TaskContext) -> Result<Box<dyn LocalizationTask>, LocError> + Send + Sync,
>;

/// Tasks registered by name and created from strings such as `grid:5`.
pub struct TaskRegistry {
    factories: BTreeMap<String, Factory>,
}

impl fmt::Debug for TaskRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaskRegistry")
            .field("names", &self.names())
            .finish()
    }
}

impl Default for TaskRegistry {
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register("grid", |arg, ctx| {
            let spec = format!("grid:{}", arg.unwrap_or(""));
            let n = arg
                .and_then(|a| a.parse().ok())
                .ok_or(LocError::UnknownTask(spec))?;
            Ok(Box::new(GridTask {
                grid: GridSpec::new(n, ctx.plate_width_cm, ctx.plate_height_cm)?,
            }))
        });
        reg.register("regression", |arg, _| match arg {
            None => Ok(Box::new(RegressionTask)),
            Some(a) => Err(LocError::UnknownTask(format!("regression:{a}"))),
        });
        reg.register("keypad", |arg, ctx| match arg {
            None => {
                ctx.keypad.validate()?;
                Ok(Box::new(KeypadTask {
                    layout: ctx.keypad.clone(),
                }))
            }
            Some(a) => Err(LocError::UnknownTask(format!("keypad:{a}"))),
        });
        reg
    }
}

impl TaskRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(Option<&str>, &TaskContext) -> Result<Box<dyn LocalizationTask>, LocError>
            + Send
            + Sync
            + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    /// Parses `name` or `name:arg` and builds the task.
    pub fn create(
        &self,
        spec: &str,
        ctx: &TaskContext,
    ) -> Result<Box<dyn LocalizationTask>, LocError> {
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (spec, None),
        };
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| LocError::UnknownTask(spec.to_string()))?;
        factory(arg, ctx)
    }
}
