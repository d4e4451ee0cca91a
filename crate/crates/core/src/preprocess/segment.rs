use crate::error::{Error, Result};
use crate::simulator::{ForceLabel, OperatingCondition, RevolutionTrace, TraceId};

/// Continuous recording with the wheel encoder angle (deg, wrapping at 360).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncoderStream {
    pub sample_rate: f64,
    pub angles: Vec<f64>,
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
    pub az: Vec<f64>,
}

impl EncoderStream {
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Concatenates whole revolutions back into a stream.
    pub fn from_traces(traces: &[RevolutionTrace]) -> Self {
        let mut s = Self {
            sample_rate: traces.first().map_or(0.0, |t| t.sample_rate),
            ..Self::default()
        };
        for t in traces {
            s.angles.extend_from_slice(&t.angles);
            s.ax.extend_from_slice(&t.ax);
            s.ay.extend_from_slice(&t.ay);
            s.az.extend_from_slice(&t.az);
        }
        s
    }
}

/// Samples that did not form a complete revolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscardedSpan {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub traces: Vec<RevolutionTrace>,
    pub discarded: Vec<DiscardedSpan>,
}

/// Splits a stream at encoder wraps. A segment counts as a full revolution
/// when it starts within one encoder step of 0 deg and ends within 1.5 steps
/// of 360 deg; anything else is reported as discarded. Traces carry the
/// supplied condition and label.
pub fn segment_revolutions(
    stream: &EncoderStream,
    condition: OperatingCondition,
    label: ForceLabel,
) -> Result<Segmentation> {
    let n = stream.len();
    if [stream.ax.len(), stream.ay.len(), stream.az.len()] != [n, n, n] {
        return Err(Error::invalid("stream channels differ in length"));
    }
    let mut bounds = vec![0];
    let mut steps = Vec::with_capacity(n);
    for i in 1..n {
        let (prev, cur) = (stream.angles[i - 1], stream.angles[i]);
        if !(0.0..360.0).contains(&cur) {
            return Err(Error::CorruptStream {
                index: i,
                reason: format!("angle {cur} outside [0, 360)"),
            });
        }
        let d = cur - prev;
        if d > 0.0 {
            steps.push(d);
        } else if d < -180.0 {
            steps.push(d + 360.0);
            bounds.push(i);
        } else {
            return Err(Error::CorruptStream {
                index: i,
                reason: format!("encoder went from {prev} to {cur} deg"),
            });
        }
    }
    bounds.push(n);

    let step = if steps.is_empty() {
        360.0
    } else {
        steps.sort_by(f64::total_cmp);
        steps[steps.len() / 2]
    };

    let mut traces = Vec::new();
    let mut discarded = Vec::new();
    for w in bounds.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a == b {
            continue;
        }
        let complete = stream.angles[a] < step && 360.0 - stream.angles[b - 1] <= 1.5 * step;
        if !complete {
            discarded.push(DiscardedSpan { start: a, len: b - a });
            continue;
        }
        traces.push(RevolutionTrace {
            id: TraceId {
                trace: traces.len() as u64,
                entry: 0,
                revolution: traces.len(),
            },
            sample_rate: stream.sample_rate,
            angles: stream.angles[a..b].to_vec(),
            ax: stream.ax[a..b].to_vec(),
            ay: stream.ay[a..b].to_vec(),
            az: stream.az[a..b].to_vec(),
            condition,
            label,
            reference: None,
        });
    }
    Ok(Segmentation { traces, discarded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::simulator::{simulate_revolution, NoiseLevel, SignalModel, TireParams};

    fn revolutions(k: usize) -> Vec<RevolutionTrace> {
        let cond = OperatingCondition::free_rolling(90.0, 4160.0);
        (0..k)
            .map(|i| {
                let mut rng = stream_rng(3, i as u64);
                simulate_revolution(
                    &cond,
                    &TireParams::default(),
                    &SignalModel::default(),
                    NoiseLevel::Std(1.0),
                    &mut rng,
                )
                .unwrap()
            })
            .collect()
    }

    fn split(stream: &EncoderStream, like: &RevolutionTrace) -> Segmentation {
        segment_revolutions(stream, like.condition, like.label).unwrap()
    }

    #[test]
    fn three_revolutions_partition_the_stream() {
        let revs = revolutions(3);
        let stream = EncoderStream::from_traces(&revs);
        let seg = split(&stream, &revs[0]);
        assert_eq!(seg.traces.len(), 3);
        assert!(seg.discarded.is_empty());
        assert_eq!(EncoderStream::from_traces(&seg.traces), stream);
    }

    #[test]
    fn partial_revolution_is_discarded_and_reported() {
        let revs = revolutions(3);
        let mut stream = EncoderStream::from_traces(&revs);
        let keep = revs[0].len() * 2 + revs[2].len() / 2;
        stream.angles.truncate(keep);
        stream.ax.truncate(keep);
        stream.ay.truncate(keep);
        stream.az.truncate(keep);
        let seg = split(&stream, &revs[0]);
        assert_eq!(seg.traces.len(), 2);
        assert_eq!(
            seg.discarded,
            vec![DiscardedSpan {
                start: revs[0].len() * 2,
                len: revs[2].len() / 2
            }]
        );
    }

    #[test]
    fn single_revolution_is_identity() {
        let revs = revolutions(1);
        let seg = split(&EncoderStream::from_traces(&revs), &revs[0]);
        assert_eq!(seg.traces.len(), 1);
        assert_eq!(seg.traces[0].angles, revs[0].angles);
        assert_eq!(seg.traces[0].az, revs[0].az);
    }

    #[test]
    fn backwards_encoder_is_corrupt() {
        let revs = revolutions(1);
        let mut stream = EncoderStream::from_traces(&revs);
        stream.angles.swap(10, 11);
        assert!(matches!(
            segment_revolutions(&stream, revs[0].condition, revs[0].label),
            Err(Error::CorruptStream { index: 11, .. })
        ));
    }
}
