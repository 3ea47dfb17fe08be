//! Per-iteration simulation records and their CSV/JSON encodings.
//!
//! Flat row schema, shared by both encodings:
//!
//! | column    | link rows  | user rows             | event rows  |
//! |-----------|------------|-----------------------|-------------|
//! | iteration | t          | t                     | t           |
//! | kind      | `link`     | `user`                | `event`     |
//! | id        | link id    | user id               | subject id  |
//! | price     | link price | path price            |             |
//! | rate      | link load  | sending rate          |             |
//! | layer     |            | attained layer        |             |
//! | note      |            | `admitted`/`dismissed`| description |

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::admission::{AdmissionResult, ScoredBid};
use crate::error::{Error, Result};
use crate::model::{LinkId, UserId};
use crate::scalar::Scalar;

pub const CSV_HEADER: &str = "iteration,kind,id,price,rate,layer,note";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSample<T> {
    pub price: T,
    pub load: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserSample<T> {
    pub path_price: T,
    pub rate: T,
    pub layer: usize,
    pub admitted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMarker {
    pub iteration: usize,
    /// User or link the event concerns; empty for network-wide events.
    pub subject: String,
    pub description: String,
}

/// Everything one admission round saw and decided.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionRecord<T> {
    pub iteration: usize,
    pub bids: Vec<ScoredBid<T>>,
    pub result: AdmissionResult<T>,
}

/// Samples of one iteration, indexed like the scenario's links and users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step<T> {
    pub iteration: usize,
    pub links: Vec<LinkSample<T>>,
    pub users: Vec<UserSample<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace<T> {
    pub link_ids: Vec<LinkId>,
    pub user_ids: Vec<UserId>,
    pub steps: Vec<Step<T>>,
    pub events: Vec<EventMarker>,
    pub admissions: Vec<AdmissionRecord<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Link,
    User,
    Event,
}

impl RecordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Link => "link",
            RecordKind::User => "user",
            RecordKind::Event => "event",
        }
    }
}

/// One flat trace row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord<T> {
    pub iteration: usize,
    pub kind: RecordKind,
    pub id: String,
    pub price: Option<T>,
    pub rate: Option<T>,
    pub layer: Option<usize>,
    pub note: String,
}

impl<T: Scalar> Trace<T> {
    pub fn new(link_ids: Vec<LinkId>, user_ids: Vec<UserId>) -> Self {
        Self {
            link_ids,
            user_ids,
            steps: Vec::new(),
            events: Vec::new(),
            admissions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.link_ids.iter().position(|l| l.0 == id)
    }

    pub fn user_index(&self, id: u32) -> Option<usize> {
        self.user_ids.iter().position(|u| u.0 == id)
    }

    fn link_series(&self, id: &str, f: impl Fn(&LinkSample<T>) -> T) -> Result<Vec<T>> {
        let i = self.link_index(id).ok_or_else(|| Error::UnknownLink(id.to_string()))?;
        Ok(self.steps.iter().map(|s| f(&s.links[i])).collect())
    }

    fn user_series<V>(&self, id: u32, f: impl Fn(&UserSample<T>) -> V) -> Result<Vec<V>> {
        let i = self.user_index(id).ok_or(Error::UnknownUser(id))?;
        Ok(self.steps.iter().map(|s| f(&s.users[i])).collect())
    }

    pub fn link_prices(&self, id: &str) -> Result<Vec<T>> {
        self.link_series(id, |s| s.price)
    }

    pub fn link_loads(&self, id: &str) -> Result<Vec<T>> {
        self.link_series(id, |s| s.load)
    }

    pub fn user_rates(&self, id: u32) -> Result<Vec<T>> {
        self.user_series(id, |s| s.rate)
    }

    pub fn user_layers(&self, id: u32) -> Result<Vec<usize>> {
        self.user_series(id, |s| s.layer)
    }

    pub fn user_path_prices(&self, id: u32) -> Result<Vec<T>> {
        self.user_series(id, |s| s.path_price)
    }

    /// Users still admitted after the last iteration.
    pub fn surviving_users(&self) -> Vec<UserId> {
        match self.steps.last() {
            Some(s) => self
                .user_ids
                .iter()
                .zip(&s.users)
                .filter(|(_, u)| u.admitted)
                .map(|(id, _)| *id)
                .collect(),
            None => self.user_ids.clone(),
        }
    }

    /// Flat rows in output order: per iteration links, then users, then events.
    pub fn records(&self) -> Vec<TraceRecord<T>> {
        let mut out =
            Vec::with_capacity(self.steps.len() * (self.link_ids.len() + self.user_ids.len()) + self.events.len());
        let mut events = self.events.iter().peekable();
        for step in &self.steps {
            for (id, s) in self.link_ids.iter().zip(&step.links) {
                out.push(TraceRecord {
                    iteration: step.iteration,
                    kind: RecordKind::Link,
                    id: id.0.clone(),
                    price: Some(s.price),
                    rate: Some(s.load),
                    layer: None,
                    note: String::new(),
                });
            }
            for (id, s) in self.user_ids.iter().zip(&step.users) {
                out.push(TraceRecord {
                    iteration: step.iteration,
                    kind: RecordKind::User,
                    id: id.to_string(),
                    price: Some(s.path_price),
                    rate: Some(s.rate),
                    layer: Some(s.layer),
                    note: if s.admitted { "admitted" } else { "dismissed" }.to_string(),
                });
            }
            while let Some(e) = events.next_if(|e| e.iteration <= step.iteration) {
                out.push(event_record(e));
            }
        }
        out.extend(events.map(event_record));
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER.split(',')).map_err(io_error)?;
        let num = |v: Option<T>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in self.records() {
            w.write_record([
                r.iteration.to_string(),
                r.kind.as_str().to_string(),
                r.id,
                num(r.price),
                num(r.rate),
                r.layer.map(|y| y.to_string()).unwrap_or_default(),
                r.note,
            ])
            .map_err(io_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("trace CSV is UTF-8")
    }

    /// The flat rows as a JSON array.
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &self.records()).map_err(|e| Error::Io(e.into()))
    }
}

fn event_record<T>(e: &EventMarker) -> TraceRecord<T> {
    TraceRecord {
        iteration: e.iteration,
        kind: RecordKind::Event,
        id: e.subject.clone(),
        price: None,
        rate: None,
        layer: None,
        note: e.description.clone(),
    }
}

fn io_error(e: csv::Error) -> Error {
    Error::Io(e.into())
}

/// Reads rows written by [`Trace::write_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<TraceRecord<f64>>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header_ok = reader
        .headers()
        .map(|h| h.iter().eq(CSV_HEADER.split(',')))
        .unwrap_or(false);
    if !header_ok {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: format!("expected header `{CSV_HEADER}`"),
        });
    }
    reader
        .deserialize()
        .map(|row| {
            row.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                column: 0,
                message: e.to_string(),
            })
        })
        .collect()
}
