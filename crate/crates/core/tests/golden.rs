use std::fs;
use std::path::PathBuf;

use quick_xml::events::Event;
use quick_xml::Reader;

mod common {
    pub mod fixtures;
}
use common::fixtures;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Set `UPDATE_GOLDEN=1` to rewrite the stored files after an intended change.
#[test]
fn emitters_match_stored_goldens() {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for r in fixtures::all() {
        for (ext, body) in [("svg", &r.svg), ("csv", &r.csv)] {
            let path = golden_dir().join(format!("{}.{ext}", r.name));
            if update {
                fs::write(&path, body).unwrap();
            }
            let stored = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(stored == *body, "{} differs from its golden", path.display());
        }
    }
}

#[test]
fn goldens_are_well_formed_svg() {
    for r in fixtures::all() {
        let mut reader = Reader::from_str(&r.svg);
        let mut root = None;
        let mut depth = 0i32;
        loop {
            match reader.read_event().unwrap_or_else(|e| panic!("{}: {e}", r.name)) {
                Event::Start(e) => {
                    root.get_or_insert_with(|| String::from_utf8_lossy(e.name().as_ref()).into_owned());
                    depth += 1;
                }
                Event::End(_) => depth -= 1,
                Event::Eof => break,
                _ => {}
            }
        }
        assert_eq!(depth, 0, "{}", r.name);
        assert_eq!(root.as_deref(), Some("svg"), "{}", r.name);
    }
}
