//! Random corpus generators and independent oracles shared by the
//! integration tests.
#![allow(dead_code)]

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use uas_core::schema::{AcousticEvent, CorpusEntry, DomainTag, NonLinguisticEvents, Paralinguistics, UasRecord};
use uas_core::validation::ViolationCode;

pub const EMOTIONS: [&str; 7] = ["Anger", "Disgust", "Sadness", "Happiness", "Neutral", "Surprise", "Fear"];
pub const AGES: [&str; 3] = ["Child", "Adult", "Elderly"];
pub const GENDERS: [&str; 2] = ["Male", "Female"];

const ACCENTS: [&str; 6] = [
    "General American English",
    "Standard British English",
    "Indian English",
    "Nigerian English",
    "Scottish English",
    "Mandarin Chinese",
];
const PROSODY: [&str; 6] = [
    "Even pace",
    "Rising intonation",
    "Fast and clipped",
    "Slow and deliberate",
    "Sing-song rhythm",
    "Halting with long pauses",
];
const TIMBRE: [&str; 8] = ["Warm", "Bright", "Husky", "Nasal", "Breathy", "Raspy", "Smooth", "Resonant"];
const WORDS: [&str; 24] = [
    "the", "quiet", "room", "street", "café", "voice", "distant", "traffic", "wind", "over", "soft", "loud", "crowd",
    "kitchen", "river", "engine", "naïve", "birds", "morning", "hall", "rain", "metal", "wooden", "echo",
];
const EVENT_LABELS: [&str; 16] = [
    "Door slam",
    "Dog bark",
    "Cough",
    "Footsteps",
    "Glass clink",
    "Car horn",
    "Phone ring",
    "Keyboard typing",
    "Engine rumble",
    "Rain",
    "Wind",
    "Crowd murmur",
    "Air conditioner hum",
    "Birdsong",
    "Background hiss",
    "Traffic",
];
const CHARACTERISTICS: [&str; 6] = [
    "Sharp",
    "Low and steady",
    "Brief, high-pitched",
    "Intermittent",
    "Muffled",
    "Constant",
];

pub fn sentence<R: Rng>(rng: &mut R, min: usize, max: usize) -> String {
    let n = rng.random_range(min..=max);
    let mut words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    let first = words[0].to_string();
    let mut s = first[..1].to_uppercase() + &first[1..];
    words.remove(0);
    for w in words {
        s.push(' ');
        s.push_str(w);
    }
    s.push('.');
    s
}

fn events<R: Rng>(rng: &mut R, labels: &mut Vec<&'static str>, max: usize) -> Vec<AcousticEvent> {
    let n = rng.random_range(0..=max);
    (0..n)
        .filter_map(|_| labels.pop())
        .map(|l| AcousticEvent::new(l, *CHARACTERISTICS.choose(rng).unwrap()))
        .collect()
}

pub fn paralinguistics<R: Rng>(rng: &mut R) -> Paralinguistics {
    Paralinguistics {
        age: Some(AGES.choose(rng).unwrap().to_string()),
        gender: Some(GENDERS.choose(rng).unwrap().to_string()),
        emotion: Some(EMOTIONS.choose(rng).unwrap().to_string()),
        accent: Some(ACCENTS.choose(rng).unwrap().to_string()),
        prosody: Some(PROSODY.choose(rng).unwrap().to_string()),
        timbre: Some(TIMBRE.choose(rng).unwrap().to_string()),
    }
}

/// A record that passes every check for an entry of at least 2 seconds.
pub fn valid_record<R: Rng>(rng: &mut R, speech: bool) -> UasRecord {
    let mut labels = EVENT_LABELS.to_vec();
    labels.shuffle(rng);
    UasRecord {
        transcription: speech.then(|| sentence(rng, 2, 12)),
        paralinguistics: if speech { paralinguistics(rng) } else { Paralinguistics::default() },
        non_linguistic_events: NonLinguisticEvents {
            description: sentence(rng, 2, 10),
            discrete_events: events(rng, &mut labels, 3),
            continuous_events: events(rng, &mut labels, 3),
        },
    }
}

pub fn full_speech_record<R: Rng>(rng: &mut R) -> UasRecord {
    let mut r = valid_record(rng, true);
    if r.non_linguistic_events.discrete_events.is_empty() {
        r.non_linguistic_events
            .discrete_events
            .push(AcousticEvent::new("Chair creak", "Brief"));
    }
    if r.non_linguistic_events.continuous_events.is_empty() {
        r.non_linguistic_events
            .continuous_events
            .push(AcousticEvent::new("Room tone", "Faint"));
    }
    r
}

pub fn entry_for(id: String, record: UasRecord, rng: &mut impl Rng) -> CorpusEntry {
    let speech = record.is_speech();
    let domain_tag = if speech {
        DomainTag::Speech
    } else if rng.random_bool(0.5) {
        DomainTag::Music
    } else {
        DomainTag::Environment
    };
    CorpusEntry {
        id,
        audio_ref: "clip.wav".into(),
        duration_seconds: rng.random_range(2.0..30.0),
        ground_truth_transcription: record.transcription.clone(),
        domain_tag,
        uas: Some(record),
    }
}

pub fn valid_entry<R: Rng>(rng: &mut R, i: usize) -> CorpusEntry {
    let speech = rng.random_bool(0.6);
    let record = valid_record(rng, speech);
    entry_for(format!("v{i}"), record, rng)
}

/// A valid entry altered so that exactly one check fires with `code`.
pub fn faulty_entry<R: Rng>(rng: &mut R, code: ViolationCode, i: usize) -> CorpusEntry {
    let id = format!("{code}-{i}");
    match code {
        ViolationCode::OntologyViolation => {
            let mut r = valid_record(rng, true);
            let p = &mut r.paralinguistics;
            match rng.random_range(0..3) {
                0 => p.emotion = Some(["Bored", "Excited", "Calm", "anger", "Joy"].choose(rng).unwrap().to_string()),
                1 => p.age = Some(["Teen", "adult", "Senior", "Infant"].choose(rng).unwrap().to_string()),
                _ => p.gender = Some(["Nonbinary", "Unknown", "male", "Other"].choose(rng).unwrap().to_string()),
            }
            entry_for(id, r, rng)
        }
        ViolationCode::TranscriptionMismatch => {
            let r = valid_record(rng, true);
            let mut e = entry_for(id, r, rng);
            let gt = e.ground_truth_transcription.as_mut().unwrap();
            match rng.random_range(0..3) {
                0 => gt.push_str(" again"),
                1 => *gt = gt.to_lowercase() + "!",
                _ => *gt = gt.replacen('.', "?", 1),
            }
            e
        }
        ViolationCode::NullRuleViolation => {
            if rng.random_bool(0.5) {
                let mut r = valid_record(rng, false);
                let donor = paralinguistics(rng);
                let path = *uas_core::schema::paths::PARALINGUISTIC.choose(rng).unwrap();
                *r.paralinguistics.get_mut(path).unwrap() = donor.get(path).map(str::to_string);
                entry_for(id, r, rng)
            } else {
                let mut r = valid_record(rng, true);
                let path = *uas_core::schema::paths::PARALINGUISTIC.choose(rng).unwrap();
                *r.paralinguistics.get_mut(path).unwrap() = None;
                entry_for(id, r, rng)
            }
        }
        ViolationCode::GenderTimbreContradiction => {
            let mut r = valid_record(rng, true);
            let p = &mut r.paralinguistics;
            if rng.random_bool(0.5) {
                p.gender = Some("Male".into());
                p.timbre = Some(["Girlish and light", "High-pitched feminine", "Soft, feminine"].choose(rng).unwrap().to_string());
            } else {
                p.gender = Some("Female".into());
                p.timbre = Some(["Deep masculine", "Rich baritone", "A male voice, gruff"].choose(rng).unwrap().to_string());
            }
            entry_for(id, r, rng)
        }
        ViolationCode::DuplicateEventLabel => {
            let speech = rng.random_bool(0.5);
            let mut r = valid_record(rng, speech);
            let nle = &mut r.non_linguistic_events;
            nle.discrete_events.truncate(2);
            let label = "Door slam";
            nle.discrete_events.retain(|e| !e.label.eq_ignore_ascii_case(label));
            nle.continuous_events.retain(|e| !e.label.eq_ignore_ascii_case(label));
            nle.discrete_events.push(AcousticEvent::new(label, "Loud"));
            let dup = if rng.random_bool(0.5) { "door SLAM " } else { label };
            if rng.random_bool(0.5) {
                nle.continuous_events.push(AcousticEvent::new(dup, "Repeated"));
            } else {
                nle.discrete_events.push(AcousticEvent::new(dup, "Second"));
            }
            entry_for(id, r, rng)
        }
        ViolationCode::DurationContentMismatch => {
            let speech = rng.random_bool(0.5);
            let r = valid_record(rng, speech);
            let mut e = entry_for(id, r, rng);
            match rng.random_range(0..3) {
                0 => e.duration_seconds = rng.random_range(0.0..0.2),
                1 => {
                    let nle = &mut e.uas.as_mut().unwrap().non_linguistic_events;
                    let budget = (2.0 * e.duration_seconds).floor() as usize + 1;
                    nle.continuous_events.clear();
                    nle.discrete_events = (0..budget)
                        .map(|k| AcousticEvent::new(format!("Click {k}"), "Sharp"))
                        .collect();
                }
                _ => {
                    let nle = &mut e.uas.as_mut().unwrap().non_linguistic_events;
                    let words = (8.0 * e.duration_seconds).floor() as usize + 1;
                    nle.description = vec!["noise"; words].join(" ");
                }
            }
            e
        }
        ViolationCode::EmptyField => {
            let speech = rng.random_bool(0.5);
            let mut r = valid_record(rng, speech);
            let nle = &mut r.non_linguistic_events;
            if nle.discrete_events.is_empty() {
                nle.discrete_events.push(AcousticEvent::new("Tap", "Light"));
            }
            match rng.random_range(0..if speech { 4 } else { 3 }) {
                0 => nle.description = "  ".into(),
                1 => nle.discrete_events[0].characteristic = String::new(),
                2 => nle.discrete_events[0].label = String::new(),
                _ => {
                    let path = ["paralinguistics.accent", "paralinguistics.prosody", "paralinguistics.timbre"]
                        .choose(rng)
                        .unwrap();
                    *r.paralinguistics.get_mut(path).unwrap() = Some(String::new());
                }
            }
            entry_for(id, r, rng)
        }
        ViolationCode::MalformedOutput => unreachable!("not produced by record checks"),
    }
}

/// Wilson bounds as the roots of (p̂ − p)² = z²·p(1 − p)/n, solved as a
/// quadratic in p.
pub fn wilson_oracle(successes: u64, n: u64, z: f64) -> (f64, f64) {
    let n = n as f64;
    let ph = successes as f64 / n;
    let a = 1.0 + z * z / n;
    let b = -(2.0 * ph + z * z / n);
    let c = ph * ph;
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    let lo = (-b - disc) / (2.0 * a);
    let hi = (-b + disc) / (2.0 * a);
    (lo.max(0.0), hi.min(1.0))
}
