//! Event data types, time-windowed batching and event-to-frame (E2F) conversion.
//!
//! An event stream is cut into consecutive windows of width `tau`, anchored at
//! the first event's timestamp. Each window's events are accumulated into an
//! `M x N` histogram over pixel coordinates and normalized by the per-frame
//! maximum count, so every non-empty frame peaks at exactly `1.0`.

use crate::error::{Error, Result};

/// Sign of the log-intensity change that triggered an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(i8)]
pub enum Polarity {
    Negative = -1,
    Positive = 1,
}

impl Polarity {
    pub fn as_i8(self) -> i8 {
        self as i8
    }
}

impl TryFrom<i8> for Polarity {
    type Error = Error;

    fn try_from(p: i8) -> Result<Self> {
        match p {
            1 => Ok(Polarity::Positive),
            -1 => Ok(Polarity::Negative),
            other => Err(Error::Validation(format!("polarity must be -1 or +1, got {other}"))),
        }
    }
}

/// A single sensor event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    /// Timestamp in microseconds.
    pub t: u64,
    /// Pixel column.
    pub x: u16,
    /// Pixel row.
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: Polarity) -> Self {
        Event { t, x, y, p }
    }
}

/// Spatial resolution of the sensor: `width` (N) columns by `height` (M) rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorGeometry {
    pub width: u32,
    pub height: u32,
}

impl SensorGeometry {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter(format!(
                "sensor geometry must be non-empty, got {width}x{height}"
            )));
        }
        if width > u16::MAX as u32 + 1 || height > u16::MAX as u32 + 1 {
            return Err(Error::Parameter(format!(
                "sensor geometry {width}x{height} exceeds 16-bit pixel addressing"
            )));
        }
        Ok(SensorGeometry { width, height })
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        (x as u32) < self.width && (y as u32) < self.height
    }
}

impl Default for SensorGeometry {
    /// 640x480, the resolution of the DVXplorer class of sensors.
    fn default() -> Self {
        SensorGeometry {
            width: 640,
            height: 480,
        }
    }
}

/// A time-ordered event sequence together with the sensor that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    events: Vec<Event>,
    geometry: SensorGeometry,
}

impl EventStream {
    /// Builds a stream, checking time order and sensor bounds.
    pub fn new(events: Vec<Event>, geometry: SensorGeometry) -> Result<Self> {
        check_sorted(&events)?;
        if let Some(i) = events.iter().position(|e| !geometry.contains(e.x, e.y)) {
            let e = events[i];
            return Err(Error::Validation(format!(
                "event {i} at ({}, {}) lies outside the {}x{} sensor",
                e.x, e.y, geometry.width, geometry.height
            )));
        }
        Ok(EventStream { events, geometry })
    }

    pub fn empty(geometry: SensorGeometry) -> Self {
        EventStream {
            events: Vec::new(),
            geometry,
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// Time span covered by the stream, `last.t + 1 - first.t`, in microseconds.
    pub fn span_us(&self) -> u64 {
        match (self.events.first(), self.events.last()) {
            (Some(a), Some(b)) => b.t + 1 - a.t,
            _ => 0,
        }
    }
}

pub(crate) fn check_sorted(events: &[Event]) -> Result<()> {
    if let Some(i) = events.windows(2).position(|w| w[1].t < w[0].t) {
        return Err(Error::Validation(format!(
            "events not sorted by time: event {} (t={}) precedes event {} (t={})",
            i,
            events[i].t,
            i + 1,
            events[i + 1].t
        )));
    }
    Ok(())
}

/// The events of one window `[window_start, window_start + window_duration)`.
///
/// `partial` marks the trailing window of a stream that ends before the
/// nominal window width elapses; its `window_duration` is then the covered
/// span rather than `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventBatch<'a> {
    pub events: &'a [Event],
    pub window_start: u64,
    pub window_duration: u64,
    pub partial: bool,
}

impl EventBatch<'_> {
    pub fn window_end(&self) -> u64 {
        self.window_start + self.window_duration
    }

    pub fn to_owned(&self) -> OwnedEventBatch {
        OwnedEventBatch {
            events: self.events.to_vec(),
            window_start: self.window_start,
            window_duration: self.window_duration,
            partial: self.partial,
        }
    }
}

/// An [`EventBatch`] that owns its events, produced by [`StreamingBatcher`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OwnedEventBatch {
    pub events: Vec<Event>,
    pub window_start: u64,
    pub window_duration: u64,
    pub partial: bool,
}

impl OwnedEventBatch {
    pub fn as_batch(&self) -> EventBatch<'_> {
        EventBatch {
            events: &self.events,
            window_start: self.window_start,
            window_duration: self.window_duration,
            partial: self.partial,
        }
    }
}

fn check_tau(tau: u64) -> Result<()> {
    if tau == 0 {
        return Err(Error::Parameter("batch duration tau must be positive".into()));
    }
    Ok(())
}

/// Cuts a stream into consecutive windows of width `tau` microseconds.
pub fn batch_events(stream: &EventStream, tau: u64) -> Result<Vec<EventBatch<'_>>> {
    batch_slice(stream.events(), tau)
}

/// [`batch_events`] over a bare slice; fails if the slice is not time-sorted.
///
/// Windows between the first and last event that contain no events are
/// emitted as empty batches so that window `j` always starts at
/// `t0 + j * tau`.
pub fn batch_slice(events: &[Event], tau: u64) -> Result<Vec<EventBatch<'_>>> {
    check_tau(tau)?;
    check_sorted(events)?;
    let (Some(first), Some(last)) = (events.first(), events.last()) else {
        return Ok(Vec::new());
    };
    let anchor = first.t;
    let window_count = (last.t - anchor) / tau + 1;
    let mut batches = Vec::with_capacity(window_count as usize);
    let mut begin = 0;
    for j in 0..window_count {
        let start = anchor + j * tau;
        let end = start + tau;
        let len = events[begin..].partition_point(|e| e.t < end);
        let slice = &events[begin..begin + len];
        begin += len;
        let (duration, partial) = if j + 1 == window_count {
            trailing_window(start, tau, last.t)
        } else {
            (tau, false)
        };
        batches.push(EventBatch {
            events: slice,
            window_start: start,
            window_duration: duration,
            partial,
        });
    }
    debug_assert_eq!(begin, events.len());
    Ok(batches)
}

fn trailing_window(start: u64, tau: u64, last_t: u64) -> (u64, bool) {
    let covered = last_t + 1 - start;
    if covered < tau {
        (covered, true)
    } else {
        (tau, false)
    }
}

/// Incremental batcher producing the same windows as [`batch_slice`] when fed
/// a stream in arbitrary chunks.
#[derive(Debug, Clone)]
pub struct StreamingBatcher {
    tau: u64,
    anchor: Option<u64>,
    window: u64,
    pending: Vec<Event>,
    last_t: u64,
}

impl StreamingBatcher {
    pub fn new(tau: u64) -> Result<Self> {
        check_tau(tau)?;
        Ok(StreamingBatcher {
            tau,
            anchor: None,
            window: 0,
            pending: Vec::new(),
            last_t: 0,
        })
    }

    /// Feeds the next chunk and returns every window it completed.
    pub fn push(&mut self, chunk: &[Event]) -> Result<Vec<OwnedEventBatch>> {
        check_sorted(chunk)?;
        let mut done = Vec::new();
        let Some(first) = chunk.first() else {
            return Ok(done);
        };
        if self.anchor.is_some() && first.t < self.last_t {
            return Err(Error::Validation(format!(
                "chunk starts at t={} before previous event t={}",
                first.t, self.last_t
            )));
        }
        let anchor = *self.anchor.get_or_insert(first.t);
        for e in chunk {
            while e.t >= anchor + (self.window + 1) * self.tau {
                done.push(OwnedEventBatch {
                    events: std::mem::take(&mut self.pending),
                    window_start: anchor + self.window * self.tau,
                    window_duration: self.tau,
                    partial: false,
                });
                self.window += 1;
            }
            self.pending.push(*e);
            self.last_t = e.t;
        }
        Ok(done)
    }

    /// Flushes the trailing window, if any event was seen.
    pub fn finish(self) -> Option<OwnedEventBatch> {
        let anchor = self.anchor?;
        let start = anchor + self.window * self.tau;
        let (window_duration, partial) = trailing_window(start, self.tau, self.last_t);
        Some(OwnedEventBatch {
            events: self.pending,
            window_start: start,
            window_duration,
            partial,
        })
    }
}

/// Un-normalized per-pixel event counts of one batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub geometry: SensorGeometry,
    /// Row-major `height x width` counts.
    pub counts: Vec<u32>,
}

impl Histogram {
    pub fn zeros(geometry: SensorGeometry) -> Self {
        Histogram {
            geometry,
            counts: vec![0; geometry.pixel_count()],
        }
    }

    /// Adds every event's pixel to the histogram. On an out-of-bounds event,
    /// returns its index within `events`; earlier events stay counted.
    #[inline]
    pub fn accumulate(&mut self, events: &[Event]) -> std::result::Result<(), usize> {
        let w = self.geometry.width as usize;
        let h = self.geometry.height as usize;
        let counts = &mut self.counts[..w * h];
        for (i, e) in events.iter().enumerate() {
            let (x, y) = (e.x as usize, e.y as usize);
            if x >= w || y >= h {
                return Err(i);
            }
            counts[y * w + x] += 1;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn max(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn clear(&mut self) {
        self.counts.fill(0);
    }

    /// Divides by the maximum count; an empty histogram maps to all zeros.
    pub fn normalize(&self, window_start: u64, window_duration: u64) -> EventFrame {
        let max = self.max();
        let pixels = if max == 0 {
            vec![0.0; self.counts.len()]
        } else {
            let m = max as f32;
            self.counts.iter().map(|&c| c as f32 / m).collect()
        };
        EventFrame {
            geometry: self.geometry,
            pixels,
            timestamp: window_start + window_duration / 2,
            window_start,
            window_duration,
        }
    }
}

/// Builds the histogram of one batch, rejecting out-of-bounds events.
pub fn histogram(batch: &EventBatch<'_>, geometry: SensorGeometry) -> Result<Histogram> {
    let mut hist = Histogram::zeros(geometry);
    hist.accumulate(batch.events)
        .map_err(|i| out_of_bounds(i, &batch.events[i], geometry))?;
    Ok(hist)
}

fn out_of_bounds(index: usize, e: &Event, geometry: SensorGeometry) -> Error {
    Error::Validation(format!(
        "event {index} at ({}, {}) lies outside the {}x{} sensor",
        e.x, e.y, geometry.width, geometry.height
    ))
}

/// E2F: histogram of event coordinates normalized to `[0, 1]`. Polarity is ignored.
pub fn events_to_frame(batch: &EventBatch<'_>, geometry: SensorGeometry) -> Result<EventFrame> {
    Ok(histogram(batch, geometry)?.normalize(batch.window_start, batch.window_duration))
}

/// Normalized event-frame intensity image.
#[derive(Debug, Clone, PartialEq)]
pub struct EventFrame {
    pub geometry: SensorGeometry,
    /// Row-major `height x width` intensities in `[0, 1]`.
    pub pixels: Vec<f32>,
    /// Midpoint of the source window, microseconds.
    pub timestamp: u64,
    pub window_start: u64,
    pub window_duration: u64,
}

impl EventFrame {
    pub fn zeros(geometry: SensorGeometry, timestamp: u64) -> Self {
        EventFrame {
            geometry,
            pixels: vec![0.0; geometry.pixel_count()],
            timestamp,
            window_start: timestamp,
            window_duration: 0,
        }
    }

    /// Wraps existing pixels, checking size and the `[0, 1]` range.
    pub fn from_pixels(geometry: SensorGeometry, pixels: Vec<f32>, timestamp: u64) -> Result<Self> {
        if pixels.len() != geometry.pixel_count() {
            return Err(Error::Validation(format!(
                "frame has {} pixels, expected {}",
                pixels.len(),
                geometry.pixel_count()
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Validation(format!(
                "pixel {i} has intensity {} outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(EventFrame {
            geometry,
            pixels,
            timestamp,
            window_start: timestamp,
            window_duration: 0,
        })
    }

    pub fn width(&self) -> usize {
        self.geometry.width as usize
    }

    pub fn height(&self) -> usize {
        self.geometry.height as usize
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width() + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        let w = self.width();
        self.pixels[y * w + x] = v;
    }

    pub fn max(&self) -> f32 {
        self.pixels.iter().copied().fold(0.0, f32::max)
    }
}

/// Streaming E2F: accumulates events chunk by chunk straight into a reusable
/// histogram and hands each finished window's frame to a sink.
///
/// Produces the same frames as `batch_slice` followed by `events_to_frame`.
#[derive(Debug, Clone)]
pub struct StreamingE2f {
    tau: u64,
    hist: Histogram,
    anchor: Option<u64>,
    window: u64,
    last_t: u64,
    seen: u64,
}

impl StreamingE2f {
    pub fn new(geometry: SensorGeometry, tau: u64) -> Result<Self> {
        check_tau(tau)?;
        Ok(StreamingE2f {
            tau,
            hist: Histogram::zeros(geometry),
            anchor: None,
            window: 0,
            last_t: 0,
            seen: 0,
        })
    }

    /// Number of events consumed so far.
    pub fn events_seen(&self) -> u64 {
        self.seen
    }

    pub fn push<F: FnMut(EventFrame)>(&mut self, chunk: &[Event], sink: &mut F) -> Result<()> {
        let Some(first) = chunk.first() else {
            return Ok(());
        };
        if self.anchor.is_some() && first.t < self.last_t {
            return Err(Error::Validation(format!(
                "event {} (t={}) precedes previous event t={}",
                self.seen, first.t, self.last_t
            )));
        }
        let anchor = *self.anchor.get_or_insert(first.t);
        let mut rest = chunk;
        while !rest.is_empty() {
            let end = anchor + (self.window + 1) * self.tau;
            if rest[0].t >= end {
                let start = anchor + self.window * self.tau;
                sink(self.hist.normalize(start, self.tau));
                self.hist.clear();
                self.window += 1;
                continue;
            }
            // Run of events inside the current window; also verifies order.
            let mut n = 1;
            let mut prev = rest[0].t;
            while n < rest.len() && rest[n].t < end {
                if rest[n].t < prev {
                    return Err(Error::Validation(format!(
                        "event {} (t={}) precedes previous event t={}",
                        self.seen + n as u64,
                        rest[n].t,
                        prev
                    )));
                }
                prev = rest[n].t;
                n += 1;
            }
            let run = &rest[..n];
            if let Err(i) = self.hist.accumulate(run) {
                return Err(out_of_bounds(self.seen as usize + i, &run[i], self.hist.geometry));
            }
            self.seen += n as u64;
            self.last_t = prev;
            rest = &rest[n..];
        }
        Ok(())
    }

    /// Emits the trailing window, if any event was seen.
    pub fn finish<F: FnMut(EventFrame)>(self, sink: &mut F) {
        if let Some(anchor) = self.anchor {
            let start = anchor + self.window * self.tau;
            let (duration, _) = trailing_window(start, self.tau, self.last_t);
            sink(self.hist.normalize(start, duration));
        }
    }
}
