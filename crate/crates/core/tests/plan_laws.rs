use std::time::{Duration, Instant};

use cha_core::plan::{parse_plan, render_canonical, Plan, PlanArg, PlanStep, StepAction};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEARCH_PLAN: &str = "# Step 1: Use google_search to find the top websites with tips to improve sleep.

search_query = \"tips to improve sleep\"
search_result = self.execute_task('google_search', [search_query])

# Step 2: Use extract_text to extract the relevant information about improving sleep from the webpage.
url = search_result['url']

sleep_tips_text = self.execute_task('extract_text', [url])";

const PPG_PLAN: &str = "# Step 1: Get PPG data for patient 5 for the entire month of August 2020

ppg_data_result = self.execute_task('affect_ppg_get', ['par_5', '2020-08-01', '2020-08-31'])

# Step 2: Analyze the HRV parameters from the obtained PPG data

hrv_analysis_result = self.execute_task('affect_ppg_analysis', [ppg_data_result])

# Step 3: Estimate the stress level for patient 5 during August 2020 using the HRV analysis results

stress_level_result = self.execute_task('affect_stress_analysis', [hrv_analysis_result])";

#[test]
fn sample_plans_parse() {
    let search = parse_plan(SEARCH_PLAN).unwrap();
    assert_eq!(search.steps.len(), 4);
    assert_eq!(
        search.steps[1].action,
        StepAction::TaskCall {
            task: "google_search".into(),
            args: vec![PlanArg::Var { name: "search_query".into() }],
        }
    );
    assert_eq!(
        search.steps[2].action,
        StepAction::FieldExtract { source: "search_result".into(), key: "url".into() }
    );
    let ppg = parse_plan(PPG_PLAN).unwrap();
    let tasks: Vec<_> = ppg.task_calls().filter_map(|s| s.task_name()).collect();
    assert_eq!(tasks, ["affect_ppg_get", "affect_ppg_analysis", "affect_stress_analysis"]);
}

fn ident() -> impl Strategy<Value = String> {
    "[a-z_][a-z0-9_]{0,10}".prop_filter("reserved", |s| s != "self")
}

fn text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[ -~]{0,20}",
        any::<String>(),
        Just("it's \"quoted\" \\ done".to_string()),
        Just("line\nbreak\ttab".to_string()),
    ]
}

#[derive(Debug, Clone)]
enum Seed {
    Call(String, Vec<(u8, usize, String)>),
    Field(usize, String),
    Literal(String),
    Alias(usize),
}

fn seed() -> impl Strategy<Value = Seed> {
    prop_oneof![
        3 => ("[a-z][a-z0-9_]{0,12}", prop::collection::vec((0u8..3, any::<usize>(), text()), 0..4))
            .prop_map(|(t, a)| Seed::Call(t, a)),
        1 => (any::<usize>(), text()).prop_map(|(i, k)| Seed::Field(i, k)),
        1 => text().prop_map(Seed::Literal),
        1 => any::<usize>().prop_map(Seed::Alias),
    ]
}

/// Builds a plan in which every read refers to an earlier binding.
fn plan() -> impl Strategy<Value = Plan> {
    prop::collection::vec((ident(), seed()), 1..12).prop_map(|items| {
        let mut defined: Vec<String> = Vec::new();
        let mut steps = Vec::new();
        for (binding, seed) in items {
            let pick = |i: usize| defined.get(i % defined.len().max(1)).cloned();
            let action = match seed {
                Seed::Call(task, args) => StepAction::TaskCall {
                    task,
                    args: args
                        .into_iter()
                        .map(|(kind, i, s)| match (kind, pick(i)) {
                            (1, Some(name)) => PlanArg::Var { name },
                            (2, Some(var)) => PlanArg::Field { var, key: s },
                            _ => PlanArg::Literal { value: s },
                        })
                        .collect(),
                },
                Seed::Field(i, key) => match pick(i) {
                    Some(source) => StepAction::FieldExtract { source, key },
                    None => StepAction::Literal { value: key },
                },
                Seed::Literal(value) => StepAction::Literal { value },
                Seed::Alias(i) => match pick(i) {
                    Some(source) => StepAction::Alias { source },
                    None => StepAction::Literal { value: String::new() },
                },
            };
            defined.push(binding.clone());
            steps.push(PlanStep { binding, action });
        }
        Plan::from_steps(steps)
    })
}

#[test]
fn parse_render_round_trip_1000() {
    let mut runner = TestRunner::new(Config::with_cases(1000));
    runner
        .run(&plan(), |p| {
            let text = render_canonical(&p);
            let back = parse_plan(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
            prop_assert_eq!(&back, &p);
            prop_assert_eq!(render_canonical(&back), text);
            Ok(())
        })
        .unwrap();
}

const ALPHABET: &[u8] = b"abcxyz_0123456789 \t\n=[](),.'\"\\#self.execute_task";

fn mutate(rng: &mut ChaCha8Rng, base: &str) -> String {
    let mut bytes: Vec<u8> = base.bytes().collect();
    for _ in 0..rng.random_range(1..6) {
        let pos = rng.random_range(0..=bytes.len());
        match rng.random_range(0..3) {
            0 if pos < bytes.len() => {
                bytes.remove(pos);
            }
            1 if pos < bytes.len() => bytes[pos] = ALPHABET[rng.random_range(0..ALPHABET.len())],
            _ => bytes.insert(pos, ALPHABET[rng.random_range(0..ALPHABET.len())]),
        }
    }
    String::from_utf8_lossy(&bytes).into_owned()
}

#[test]
fn fuzz_100k_inputs_without_panic() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let bases = [SEARCH_PLAN, PPG_PLAN, "a = 'x'\nb = self.execute_task('t', [a, a['k']])"];
    let (mut ok, mut err) = (0, 0);
    for i in 0..100_000 {
        let input = match i % 3 {
            0 => {
                let base = bases[rng.random_range(0..bases.len())];
                mutate(&mut rng, base)
            }
            1 => (0..rng.random_range(0..80))
                .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())] as char)
                .collect(),
            _ => (0..rng.random_range(0..40)).map(|_| rng.random::<char>()).collect(),
        };
        match std::panic::catch_unwind(|| parse_plan(&input)) {
            Ok(Ok(_)) => ok += 1,
            Ok(Err(_)) => err += 1,
            Err(_) => panic!("parser panicked on {input:?}"),
        }
    }
    assert_eq!(ok + err, 100_000);
    assert!(ok > 0 && err > 0);
    assert!(started.elapsed() < Duration::from_secs(30));
}
