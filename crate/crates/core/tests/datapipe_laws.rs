use std::collections::HashSet;

use cha_core::datapipe::{is_reference, DataPipe, DatapipeError};
use cha_core::value::{Argument, Payload};
use proptest::prelude::*;
use serde_json::json;

#[test]
fn hundred_thousand_round_trips_without_collision() {
    let pipe = DataPipe::new();
    let mut keys = HashSet::with_capacity(100_000);
    for i in 0..100_000u64 {
        let key = pipe.store(Payload::Value(json!(i)), "t").unwrap();
        assert!(is_reference(&key));
        assert!(keys.insert(key.clone()), "collision on {key}");
        assert_eq!(pipe.retrieve(&key).unwrap(), Payload::Value(json!(i)));
    }
    assert_eq!(pipe.len(), 100_000);
}

#[derive(Debug, Clone)]
enum Item {
    Plain(String),
    Stored(i64),
    Missing,
    Inline(i64),
}

fn item() -> impl Strategy<Value = Item> {
    prop_oneof![
        "[ -~]{0,12}".prop_map(Item::Plain),
        any::<i64>().prop_map(Item::Stored),
        Just(Item::Missing),
        any::<i64>().prop_map(Item::Inline),
    ]
}

proptest! {
    #[test]
    fn resolve_arguments_on_mixed_lists(items in prop::collection::vec(item(), 0..12)) {
        let pipe = DataPipe::new();
        let mut args = Vec::new();
        let mut expected = Vec::new();
        let mut first_missing = None;
        for (i, it) in items.iter().enumerate() {
            match it {
                Item::Plain(s) => {
                    args.push(Argument::Text(s.clone()));
                    expected.push(Argument::Text(s.clone()));
                }
                Item::Stored(v) => {
                    let key = pipe.store(Payload::Value(json!(v)), "t").unwrap();
                    args.push(Argument::Text(key));
                    expected.push(Argument::Payload(Payload::Value(json!(v))));
                }
                Item::Missing => {
                    let key = format!("datapipe:{}", uuid::Uuid::new_v4());
                    args.push(Argument::Text(key.clone()));
                    expected.push(Argument::Text(key));
                    first_missing.get_or_insert(i);
                }
                Item::Inline(v) => {
                    args.push(Argument::Payload(Payload::Value(json!(v))));
                    expected.push(Argument::Payload(Payload::Value(json!(v))));
                }
            }
        }
        match (pipe.resolve_arguments(&args), first_missing) {
            (Ok(resolved), None) => prop_assert_eq!(resolved, expected),
            (Err(e), Some(i)) => {
                prop_assert_eq!(e.position, i);
                prop_assert!(matches!(e.source, DatapipeError::UnknownKey(_)));
            }
            (other, missing) => prop_assert!(false, "{:?} with missing {:?}", other, missing),
        }
    }
}
