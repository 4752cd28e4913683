//! The simulated building: true plant, weather, occupancy and sensors.

pub mod plant;
pub mod schedule;
pub mod trace;
pub mod weather;

pub use plant::{measure, step_plant, Plant, PlantState};
pub use schedule::{comfort_bounds, OccupancySchedule, OccupiedWindow};
pub use trace::{Mode, SimulationTrace, TraceRow};
pub use weather::{external_temperature, weather_forecast, BiasSchedule, BiasSegment, WeatherModel};
