use std::collections::BTreeMap;
use std::io::BufReader;
use std::net::TcpListener;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use meloform::analysis::form_accuracy;
use meloform::assembler::{generate_melody, Assembler};
use meloform::form::{parse_form, FormSpec};
use meloform::refine::{
    decode_response, default_controls, encode_request, ground_truth_response, refine_melody,
    refinement_schedule, serve, BaselineRefiner, RefineError, RefineRequest, RefineResponse,
    Refiner, RemoteRefiner, Token,
};
use meloform::types::{Melody, Meta};

fn melody(form: &str, seed: u64) -> (Melody, FormSpec) {
    let form = parse_form(form).unwrap();
    let m = generate_melody(
        &form,
        &Meta::default(),
        4,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap();
    (m, form)
}

#[test]
fn case_study_schedule_spans_sections() {
    let form = parse_form("A(a1,a1',a1'')B(b1,b1',b1'')A(a1,a1,a1)").unwrap();
    let schedule = refinement_schedule(&form);
    assert_eq!(schedule[0], vec![0, 6, 7, 8]);
    let mut all: Vec<usize> = schedule.concat();
    all.sort_unstable();
    assert_eq!(all, (0..9).collect::<Vec<_>>());
}

#[test]
fn request_json_uses_token_strings() {
    let (m, _) = melody("A(a1,a2)", 1);
    let controls = default_controls(&m, &Assembler::default(), &BTreeMap::new());
    let req = encode_request(&m, &[1], &controls, 42, 0.9).unwrap();
    let value: serde_json::Value = serde_json::to_value(&req).unwrap();
    assert_eq!(value["id"], 42);
    assert_eq!(value["nucleus_p"], 0.9);
    assert_eq!(value["context"][0], "TONALITY_0_major");
    assert_eq!(value["context"][1], "BOS");
    assert!(value["context"]
        .as_array()
        .unwrap()
        .iter()
        .any(|t| t == "SEP"));
    assert!(value["context"]
        .as_array()
        .unwrap()
        .iter()
        .any(|t| t == "CAD_AUTH"));
    assert_eq!(value["controls"][0]["phrase"], 1);

    let mut without_p = value.clone();
    without_p.as_object_mut().unwrap().remove("nucleus_p");
    let back: RefineRequest = serde_json::from_value(without_p).unwrap();
    assert_eq!(back.nucleus_p, 0.9);
    assert_eq!(serde_json::from_value::<RefineRequest>(value).unwrap(), req);
}

#[test]
fn unknown_token_is_rejected() {
    let err = serde_json::from_str::<RefineResponse>(r#"{"id":0,"phrases":[["BAR","PITCH_200"]]}"#);
    assert!(err.is_err());
    let err = serde_json::from_str::<RefineResponse>(r#"{"id":0,"phrases":[["BAR","POS_01"]]}"#);
    assert!(err.is_err());
}

#[test]
fn ground_truth_decodes_for_every_group() {
    let (m, form) = melody("A(a1,a1)B(b1,b2)A(a1,a1)", 2);
    let controls = default_controls(&m, &Assembler::default(), &BTreeMap::new());
    for (g, group) in refinement_schedule(&form).iter().enumerate() {
        let req = encode_request(&m, group, &controls, g as u64, 0.9).unwrap();
        let decoded = decode_response(&ground_truth_response(&m, &req).unwrap(), &req).unwrap();
        for d in decoded {
            let original = m.phrase(d.phrase).unwrap();
            let plain: Vec<_> = original
                .notes
                .iter()
                .map(|n| (n.onset, n.duration, n.pitch))
                .collect();
            let got: Vec<_> = d
                .notes
                .iter()
                .map(|n| (n.onset, n.duration, n.pitch))
                .collect();
            assert_eq!(got, plain);
            assert_eq!(d.cadence, original.cadence);
        }
    }
}

#[test]
fn baseline_over_tcp_matches_in_process() {
    let (m, form) = melody("A(a1,a2)B(b1,b1)", 3);
    let controls = default_controls(&m, &Assembler::default(), &BTreeMap::new());

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let range = m.meta.pitch_range;
    let server = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let reader = BufReader::new(stream.try_clone().unwrap());
        serve(&mut BaselineRefiner::new(range, 5), reader, stream).unwrap()
    });

    let mut remote = RemoteRefiner::connect(&addr).unwrap();
    let over_wire = refine_melody(&m, &form, &mut remote, &controls, 0.9).unwrap();
    drop(remote);
    let answered = server.join().unwrap();
    assert_eq!(answered, refinement_schedule(&form).len());

    let local = refine_melody(
        &m,
        &form,
        &mut BaselineRefiner::new(range, 5),
        &controls,
        0.9,
    )
    .unwrap();
    assert_eq!(over_wire.melody, local.melody);
    assert_eq!(form_accuracy(&over_wire.melody, &form), Ok(1.0));
}

struct Broken;

impl Refiner for Broken {
    fn name(&self) -> &'static str {
        "broken"
    }

    fn refine(&mut self, request: &RefineRequest) -> Result<RefineResponse, RefineError> {
        if request.id == 1 {
            return Err(RefineError::Transport("connection reset".into()));
        }
        Ok(RefineResponse::from_flat(request.id, &[Token::Bar]))
    }
}

#[test]
fn failures_carry_the_group_index() {
    let (m, form) = melody("A(a1)B(b1)", 4);
    let controls = default_controls(&m, &Assembler::default(), &BTreeMap::new());
    match refine_melody(&m, &form, &mut Broken, &controls, 0.9) {
        // group 0 gets one BAR for a four-bar phrase
        Err(RefineError::Group { group: 0, source }) => {
            assert!(matches!(
                *source,
                RefineError::BarMismatch {
                    expected: 4,
                    found: 1,
                    ..
                }
            ))
        }
        other => panic!("{other:?}"),
    }
}
