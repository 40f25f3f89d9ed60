//! Snapshots, occupation accumulators and the branching event log of one run.

use std::io::{self, Write};

use super::observable::SharedObservable;
use super::ModelParams;
use crate::error::{usage, Result};

/// Branching events in structure-of-arrays form. Locations hold `dim` values
/// per event.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    dim: usize,
    pub times: Vec<f64>,
    pub locations: Vec<f64>,
    pub offspring: Vec<u64>,
}

/// View of one logged branching.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchEvent<'a> {
    pub time: f64,
    pub location: &'a [f64],
    pub offspring: u64,
}

impl BranchEvent<'_> {
    /// (offspring - 1) / N.
    pub fn net_mass(&self, n_scale: u64) -> f64 {
        (self.offspring as f64 - 1.0) / n_scale as f64
    }
}

impl EventLog {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Appends an event; offspring = 1 events are identities and are dropped.
    pub fn push(&mut self, time: f64, location: &[f64], offspring: u64) {
        debug_assert_eq!(location.len(), self.dim);
        if offspring == 1 {
            return;
        }
        self.times.push(time);
        self.locations.extend_from_slice(location);
        self.offspring.push(offspring);
    }

    pub fn get(&self, i: usize) -> BranchEvent<'_> {
        BranchEvent {
            time: self.times[i],
            location: &self.locations[i * self.dim..(i + 1) * self.dim],
            offspring: self.offspring[i],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = BranchEvent<'_>> {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// Number of events with time ≤ t (events are time-ordered).
    pub fn count_until(&self, t: f64) -> usize {
        let eps = 1e-12 * t.abs().max(1.0);
        self.times.partition_point(|&s| s <= t + eps)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub count: usize,
    /// Particle coordinates, kept only when the run asked for them.
    pub positions: Option<Vec<f64>>,
}

pub struct PathRecorder {
    pub(crate) params: ModelParams,
    pub(crate) dt: f64,
    pub(crate) observables: Vec<SharedObservable>,
    pub(crate) snapshots: Vec<Snapshot>,
    /// instant[s][o] = ⟨X_{t_s}, f_o⟩ at snapshot s.
    pub(crate) instant: Vec<Vec<Vec<f64>>>,
    /// occupation[s][o] = trapezoid of ⟨X_r, f_o⟩ over [0, t_s].
    pub(crate) occupation: Vec<Vec<Vec<f64>>>,
    pub(crate) counts: Vec<usize>,
    pub(crate) events: EventLog,
    pub(crate) extinction_time: Option<f64>,
}

impl std::fmt::Debug for PathRecorder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PathRecorder")
            .field("params", &self.params)
            .field("dt", &self.dt)
            .field("observables", &self.observables.iter().map(|o| o.name()).collect::<Vec<_>>())
            .field("snapshots", &self.snapshots.len())
            .field("events", &self.events.len())
            .field("extinction_time", &self.extinction_time)
            .finish()
    }
}

impl PathRecorder {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// The step actually used (t_end divided by the step count).
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.params.t_end
    }

    pub fn observables(&self) -> &[SharedObservable] {
        &self.observables
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    /// Particle count after every step, starting with the initial state.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Total mass after every step.
    pub fn mass_history(&self) -> Vec<f64> {
        let w = 1.0 / self.params.n_scale as f64;
        self.counts.iter().map(|&c| c as f64 * w).collect()
    }

    pub fn events(&self) -> &EventLog {
        &self.events
    }

    pub fn events_mut(&mut self) -> &mut EventLog {
        &mut self.events
    }

    /// First step time at which no particles remain.
    pub fn extinction_time(&self) -> Option<f64> {
        self.extinction_time
    }

    pub fn snapshot_index(&self, t: f64) -> Result<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        match self.snapshots.iter().position(|s| (s.time - t).abs() <= tol) {
            Some(i) => Ok(i),
            None => usage(format!("time {t} is not a snapshot time")),
        }
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    /// ⟨X_t, f_o⟩ for the registered observable `o` at snapshot time `t`.
    pub fn instant(&self, o: usize, t: f64) -> Result<&[f64]> {
        let s = self.snapshot_index(t)?;
        Ok(&self.instant[s][o])
    }

    /// ∫_0^t ⟨X_r, f_o⟩ dr (trapezoid on the step grid) at snapshot time `t`.
    pub fn occupation(&self, o: usize, t: f64) -> Result<&[f64]> {
        let s = self.snapshot_index(t)?;
        Ok(&self.occupation[s][o])
    }

    /// First registered observable of concrete type `T` satisfying `pred`.
    pub fn find_observable<T: 'static>(&self, pred: impl Fn(&T) -> bool) -> Option<(usize, &T)> {
        self.observables
            .iter()
            .enumerate()
            .find_map(|(i, o)| o.as_any().downcast_ref::<T>().filter(|t| pred(t)).map(|t| (i, t)))
    }

    /// Event file: a comment header, then `time location... offspring` per line.
    pub fn write_events<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "# events dim={} n_scale={} columns=time,location{},offspring",
            self.events.dim(),
            self.params.n_scale,
            if self.events.dim() == 2 { ",location_y" } else { "" }
        )?;
        for e in self.events.iter() {
            write!(w, "{:e}", e.time)?;
            for x in e.location {
                write!(w, " {x:e}")?;
            }
            writeln!(w, " {}", e.offspring)?;
        }
        Ok(())
    }

    /// Snapshot CSV: `time,count,mass,<observable>[j]...` for scalar-size
    /// observables up to `max_columns` outputs each.
    pub fn write_snapshots<W: Write>(&self, mut w: W, max_columns: usize) -> io::Result<()> {
        let mut header = vec!["time".to_string(), "count".into(), "mass".into()];
        for o in &self.observables {
            for j in 0..o.len().min(max_columns) {
                header.push(format!("{}[{j}]", o.name()));
                header.push(format!("occ:{}[{j}]", o.name()));
            }
        }
        writeln!(w, "{}", header.join(","))?;
        let inv_n = 1.0 / self.params.n_scale as f64;
        for (s, snap) in self.snapshots.iter().enumerate() {
            let mut row = vec![
                format!("{:e}", snap.time),
                snap.count.to_string(),
                format!("{:e}", snap.count as f64 * inv_n),
            ];
            for (o, obs) in self.observables.iter().enumerate() {
                for j in 0..obs.len().min(max_columns) {
                    row.push(format!("{:e}", self.instant[s][o][j]));
                    row.push(format!("{:e}", self.occupation[s][o][j]));
                }
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}
