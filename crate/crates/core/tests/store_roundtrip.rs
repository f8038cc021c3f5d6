use std::collections::BTreeMap;

use mnemo_core::providers::stable_hash;
use mnemo_core::store::{EpisodeStore, FileStore, MemoryStore, NewEpisode};
use mnemo_core::types::{Episode, MemoryScope, Metadata, Producer, Timestamp};

fn corpus() -> Vec<NewEpisode> {
    (0..100)
        .map(|i| {
            let mut metadata = Metadata::new();
            metadata.insert("turn".into(), i.to_string());
            if i % 7 == 0 {
                metadata.insert("topic".into(), "travel ✈ and \"quotes\"".into());
            }
            NewEpisode {
                scope: MemoryScope::new("org", "proj", format!("user{}", i % 3), "agent", format!("s{}", i % 5)),
                content: format!("Turn {i}: line one.\nLine two with unicode ünïcødé and tabs\t{i}."),
                producer: if i % 2 == 0 { Producer::User } else { Producer::Agent },
                timestamp: Timestamp::from_millis(1_700_000_000_000 + i * 1_500),
                metadata,
            }
        })
        .collect()
}

fn dump(store: &dyn EpisodeStore) -> BTreeMap<u64, Episode> {
    store
        .sessions()
        .into_iter()
        .flat_map(|s| store.get_range(&s, 0, u64::MAX).unwrap())
        .map(|e| (e.id.0, e))
        .collect()
}

fn checksum(episodes: &BTreeMap<u64, Episode>) -> u64 {
    stable_hash(&serde_json::to_string(&episodes.values().collect::<Vec<_>>()).unwrap())
}

fn check(store: &dyn EpisodeStore, written: &[Episode]) {
    let dumped = dump(store);
    assert_eq!(dumped.len(), 100);
    for e in written {
        assert_eq!(store.get(e.id).as_ref(), Some(e));
        assert_eq!(&dumped[&e.id.0], e);
    }
    let expected: BTreeMap<u64, Episode> = written.iter().map(|e| (e.id.0, e.clone())).collect();
    assert_eq!(checksum(&dumped), checksum(&expected));
}

#[test]
fn memory_store_returns_what_was_written() {
    let store = MemoryStore::new();
    let written: Vec<Episode> = corpus().into_iter().map(|n| store.append(n).unwrap()).collect();
    check(&store, &written);
    for s in store.sessions() {
        let seqs: Vec<u64> = store.get_range(&s, 0, 100).unwrap().iter().map(|e| e.sequence).collect();
        assert_eq!(seqs, (0..seqs.len() as u64).collect::<Vec<_>>());
    }
}

#[test]
fn file_store_survives_reopen_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("episodes.log");
    let written: Vec<Episode> = {
        let store = FileStore::open(&path).unwrap();
        corpus().into_iter().map(|n| store.append(n).unwrap()).collect()
    };
    let reopened = FileStore::open(&path).unwrap();
    check(&reopened, &written);

    let next = reopened
        .append(NewEpisode {
            scope: written[0].scope.clone(),
            content: "after reopen".into(),
            producer: Producer::User,
            timestamp: Timestamp::from_millis(1_800_000_000_000),
            metadata: Metadata::new(),
        })
        .unwrap();
    assert_eq!(next.sequence, reopened.session_len(&written[0].scope) - 1);
    assert!(written.iter().all(|e| e.id != next.id));
}

#[test]
fn deletions_persist_across_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("episodes.log");
    let gone = {
        let store = FileStore::open(&path).unwrap();
        let written: Vec<Episode> = corpus().into_iter().map(|n| store.append(n).unwrap()).collect();
        let gone = written[0].scope.clone();
        assert_eq!(store.delete_session(&gone).unwrap(), written.iter().filter(|e| e.scope == gone).count());
        gone
    };
    let reopened = FileStore::open(&path).unwrap();
    assert_eq!(reopened.session_len(&gone), 0);
    assert!(!reopened.sessions().contains(&gone));
    assert!(dump(&reopened).len() < 100);
}
