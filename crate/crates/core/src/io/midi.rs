//! Standard MIDI File export and import on the sixteenth-note grid.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use midly::num::{u15, u24, u28, u4, u7};
use midly::{Format, Header, MetaMessage, MidiMessage, Smf, Timing, TrackEvent, TrackEventKind};

use super::{file_error, IoError};
use crate::types::{Melody, Note};

pub const TICKS_PER_QUARTER: u16 = 480;
/// MIDI ticks per grid tick (one sixteenth).
pub const GRID_TICKS: u32 = TICKS_PER_QUARTER as u32 / 4;

const VELOCITY: u8 = 80;

#[derive(Clone, Debug, PartialEq)]
pub struct ImportedMidi {
    /// Notes on the sixteenth grid, sorted by onset then pitch.
    pub notes: Vec<Note>,
    pub tempo: u16,
    pub meter: (u8, u8),
    /// Note boundaries that had to be moved onto the grid.
    pub off_grid: usize,
}

fn delta_track(mut events: Vec<(u32, u8, TrackEventKind<'static>)>) -> Vec<TrackEvent<'static>> {
    // sort key: tick, then offs (0) before ons (1) before end-of-track (2)
    events.sort_by_key(|&(tick, order, _)| (tick, order));
    let mut last = 0;
    events
        .into_iter()
        .map(|(tick, _, kind)| {
            let delta = tick - last;
            last = tick;
            TrackEvent {
                delta: u28::new(delta),
                kind,
            }
        })
        .collect()
}

/// Format-1 file: a conductor track with tempo and 4/4, then one melody
/// track.
pub fn midi_bytes(melody: &Melody) -> Result<Vec<u8>, IoError> {
    let micros = 60_000_000 / melody.meta.tempo.max(1) as u32;
    let conductor = vec![
        TrackEvent {
            delta: u28::new(0),
            kind: TrackEventKind::Meta(MetaMessage::Tempo(u24::new(micros))),
        },
        TrackEvent {
            delta: u28::new(0),
            kind: TrackEventKind::Meta(MetaMessage::TimeSignature(4, 2, 24, 8)),
        },
        TrackEvent {
            delta: u28::new(0),
            kind: TrackEventKind::Meta(MetaMessage::EndOfTrack),
        },
    ];
    let notes = melody.absolute_notes();
    let mut events = Vec::with_capacity(notes.len() * 2 + 1);
    let channel = u4::new(0);
    for n in &notes {
        if n.pitch > 127 {
            return Err(IoError::Midi(format!("pitch {} out of range", n.pitch)));
        }
        let key = u7::new(n.pitch);
        events.push((
            n.onset * GRID_TICKS,
            1,
            TrackEventKind::Midi {
                channel,
                message: MidiMessage::NoteOn {
                    key,
                    vel: u7::new(VELOCITY),
                },
            },
        ));
        events.push((
            n.end() * GRID_TICKS,
            0,
            TrackEventKind::Midi {
                channel,
                message: MidiMessage::NoteOff {
                    key,
                    vel: u7::new(0),
                },
            },
        ));
    }
    let end = melody.phrases().map(|p| p.length_ticks()).sum::<u32>() * GRID_TICKS;
    let end = end.max(
        notes
            .iter()
            .map(|n| n.end() * GRID_TICKS)
            .max()
            .unwrap_or(0),
    );
    events.push((end, 2, TrackEventKind::Meta(MetaMessage::EndOfTrack)));

    let mut smf = Smf::new(Header::new(
        Format::Parallel,
        Timing::Metrical(u15::new(TICKS_PER_QUARTER)),
    ));
    smf.tracks.push(conductor);
    smf.tracks.push(delta_track(events));
    let mut out = Vec::new();
    smf.write_std(&mut out)
        .map_err(|e| IoError::Midi(e.to_string()))?;
    Ok(out)
}

pub fn export_midi(melody: &Melody, path: &Path) -> Result<(), IoError> {
    std::fs::write(path, midi_bytes(melody)?).map_err(file_error(path))
}

pub fn import_midi(path: &Path) -> Result<ImportedMidi, IoError> {
    let bytes = std::fs::read(path).map_err(file_error(path))?;
    parse_midi(&bytes)
}

fn quantize(tick: u64, unit: u64, moved: &mut usize) -> u32 {
    if !tick.is_multiple_of(unit) {
        *moved += 1;
    }
    ((tick + unit / 2) / unit) as u32
}

/// Reads notes from every track. Only 4/4 is accepted; boundaries off
/// the sixteenth grid are rounded to the nearest grid line.
pub fn parse_midi(bytes: &[u8]) -> Result<ImportedMidi, IoError> {
    let smf = Smf::parse(bytes).map_err(|e| IoError::Midi(e.to_string()))?;
    let tpq = match smf.header.timing {
        Timing::Metrical(t) => t.as_int() as u64,
        Timing::Timecode(..) => {
            return Err(IoError::Midi("timecode timing is not supported".into()))
        }
    };
    if tpq == 0 || tpq % 4 != 0 {
        return Err(IoError::Midi(format!(
            "{tpq} ticks per quarter is not divisible into sixteenths"
        )));
    }
    let unit = tpq / 4;
    let mut tempo = None;
    let mut meter = None;
    let mut spans: Vec<(u64, u64, u8)> = Vec::new();
    for track in &smf.tracks {
        let mut now = 0u64;
        let mut open: BTreeMap<(u8, u8), VecDeque<u64>> = BTreeMap::new();
        for event in track {
            now += event.delta.as_int() as u64;
            match event.kind {
                TrackEventKind::Meta(MetaMessage::Tempo(us)) => {
                    tempo.get_or_insert((60_000_000.0 / us.as_int().max(1) as f64).round() as u16);
                }
                TrackEventKind::Meta(MetaMessage::TimeSignature(num, pow, ..)) => {
                    let denominator = 1u32 << pow.min(31);
                    if (num, denominator) != (4, 4) {
                        return Err(IoError::UnsupportedMeter {
                            numerator: num,
                            denominator,
                        });
                    }
                    meter = Some((num, 4));
                }
                TrackEventKind::Midi { channel, message } => {
                    let (key, on) = match message {
                        MidiMessage::NoteOn { key, vel } => (key.as_int(), vel.as_int() > 0),
                        MidiMessage::NoteOff { key, .. } => (key.as_int(), false),
                        _ => continue,
                    };
                    let slot = open.entry((channel.as_int(), key)).or_default();
                    if on {
                        slot.push_back(now);
                    } else if let Some(start) = slot.pop_front() {
                        spans.push((start, now, key));
                    }
                }
                _ => {}
            }
        }
    }
    let mut off_grid = 0;
    let mut notes: Vec<Note> = spans
        .into_iter()
        .map(|(start, end, pitch)| {
            let onset = quantize(start, unit, &mut off_grid);
            let stop = quantize(end, unit, &mut off_grid);
            Note::new(onset, stop.saturating_sub(onset).max(1), pitch)
        })
        .collect();
    if off_grid > 0 {
        log::warn!(
            "{off_grid} note boundaries were off the sixteenth grid and have been quantized"
        );
    }
    notes.sort_by_key(|n| (n.onset, n.pitch));
    Ok(ImportedMidi {
        notes,
        tempo: tempo.unwrap_or(120),
        meter: meter.unwrap_or((4, 4)),
        off_grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::parse_form;
    use crate::types::{Meta, Mode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn raw_file(tpq: u16, events: Vec<(u32, TrackEventKind<'static>)>) -> Vec<u8> {
        let mut smf = Smf::new(Header::new(
            Format::SingleTrack,
            Timing::Metrical(u15::new(tpq)),
        ));
        let mut last = 0;
        let mut track: Vec<TrackEvent> = events
            .into_iter()
            .map(|(t, kind)| {
                let delta = u28::new(t - last);
                last = t;
                TrackEvent { delta, kind }
            })
            .collect();
        track.push(TrackEvent {
            delta: u28::new(0),
            kind: TrackEventKind::Meta(MetaMessage::EndOfTrack),
        });
        smf.tracks.push(track);
        let mut out = Vec::new();
        smf.write_std(&mut out).unwrap();
        out
    }

    fn on(key: u8) -> TrackEventKind<'static> {
        TrackEventKind::Midi {
            channel: u4::new(0),
            message: MidiMessage::NoteOn {
                key: u7::new(key),
                vel: u7::new(90),
            },
        }
    }

    fn off(key: u8) -> TrackEventKind<'static> {
        // running-status style note-off
        TrackEventKind::Midi {
            channel: u4::new(0),
            message: MidiMessage::NoteOn {
                key: u7::new(key),
                vel: u7::new(0),
            },
        }
    }

    #[test]
    fn round_trip_keeps_tuples_and_tempo() {
        let form = parse_form("A(a1,a1)B(b1)").unwrap();
        let meta = Meta::new(2, Mode::Minor, 96, 55, 79).unwrap();
        let melody =
            crate::assembler::generate_melody(&form, &meta, 4, &mut ChaCha8Rng::seed_from_u64(3))
                .unwrap();
        let back = parse_midi(&midi_bytes(&melody).unwrap()).unwrap();
        let want: Vec<_> = melody
            .absolute_notes()
            .iter()
            .map(|n| (n.onset, n.duration, n.pitch))
            .collect();
        let got: Vec<_> = back
            .notes
            .iter()
            .map(|n| (n.onset, n.duration, n.pitch))
            .collect();
        assert_eq!(got, want);
        assert_eq!((back.tempo, back.meter, back.off_grid), (96, (4, 4), 0));
    }

    #[test]
    fn three_four_is_rejected() {
        let bytes = raw_file(
            480,
            vec![
                (
                    0,
                    TrackEventKind::Meta(MetaMessage::TimeSignature(3, 2, 24, 8)),
                ),
                (0, on(60)),
                (480, off(60)),
            ],
        );
        let err = parse_midi(&bytes).unwrap_err();
        assert!(err.to_string().contains("meter unsupported"), "{err}");
    }

    #[test]
    fn off_grid_events_snap_to_nearest_sixteenth() {
        // 96 ticks per quarter: one sixteenth is 24 ticks
        let bytes = raw_file(
            96,
            vec![(0, on(60)), (50, off(60)), (61, on(62)), (95, off(62))],
        );
        let got = parse_midi(&bytes).unwrap();
        // 50/24 = 2.08 -> 2, 61/24 = 2.54 -> 3, 95/24 = 3.96 -> 4
        assert_eq!(got.notes, vec![Note::new(0, 2, 60), Note::new(3, 1, 62)]);
        assert_eq!(got.off_grid, 3);
    }

    #[test]
    fn garbage_is_an_error() {
        assert!(matches!(
            parse_midi(b"not a midi file"),
            Err(IoError::Midi(_))
        ));
    }
}
