//! Acceptance checks. Prints one PASS or FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use common::corpus::{source, CASES};
use common::family;
use common::heaps::foldable;
use common::oracle::{self, reachable_universe};
use shapeck::abstraction::{Abstraction, FoldKind};
use shapeck::engine::{analyze_program, forget, Analysis, Config, Outcome, Property};
use shapeck::formula::{canonicalize, normalize, parse_heap, PureAtom, SymbolicHeap, Var};
use shapeck::frontend::{classify_structs, parse_program, StructKind};
use shapeck::solver::{check_entail, check_sat};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn heap(s: &str) -> SymbolicHeap {
    canonicalize(&normalize(&parse_heap(s).unwrap()).unwrap())
}

fn analyze(name: &str) -> Result<Analysis, String> {
    let p = parse_program(&source(name)).map_err(|e| format!("{name}: {e}"))?;
    analyze_program(&p, Config::default()).map_err(|e| format!("{name}: {e}"))
}

fn outcomes(a: &Analysis) -> [Outcome; 3] {
    Property::ALL.map(|p| a.verdicts.iter().find(|v| v.property == p).unwrap().outcome)
}

/// Locations swept by the oracle. Family heaps have no existentials, so
/// stack-reachable models are all their models.
const ORACLE_LOCATIONS: usize = 7;

fn solver_agrees_with_oracle() -> Check {
    let raw = family();
    let models = reachable_universe(&["x", "y"], ORACLE_LOCATIONS);
    let mut sat_checked = 0;
    for h in &raw {
        let expected = models.iter().any(|m| oracle::satisfies(m, h));
        ensure(check_sat(h).is_sat() == expected, || format!("check_sat disagrees on {h}"))?;
        sat_checked += 1;
    }
    let heaps: Vec<SymbolicHeap> = raw
        .iter()
        .filter_map(|h| normalize(h).ok())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let bits: Vec<Vec<bool>> = heaps
        .iter()
        .map(|h| models.iter().map(|m| oracle::satisfies(m, h)).collect())
        .collect();
    let mut pairs = 0;
    for (i, l) in heaps.iter().enumerate() {
        for (j, r) in heaps.iter().enumerate() {
            let expected = bits[i].iter().zip(&bits[j]).all(|(a, b)| !a || *b);
            ensure(check_entail(l, r) == expected, || {
                format!("check_entail({l} |- {r}) should be {expected}")
            })?;
            pairs += 1;
        }
    }
    Ok(format!(
        "{sat_checked} formulas, {} normalized, {pairs} ordered pairs, {} oracle models",
        heaps.len(),
        models.len()
    ))
}

fn two_cell_fold() -> Check {
    let abs = Abstraction::default();
    let none = BTreeSet::new();
    let with = heap("E y . x != z & ls(1+; x, y) * y -> (next: z)");
    let (kind, folded) = abs.fold_once(&with, &none).ok_or("the fold did not apply")?;
    let expected = heap("x != z & ls(2+; x, z)");
    ensure(kind == FoldKind::Sll && canonicalize(&folded) == expected, || {
        format!("folded to {folded}")
    })?;
    ensure(check_entail(&with, &folded), || "fold is not entailed".into())?;
    let without = heap("E y . ls(1+; x, y) * y -> (next: z)");
    if let Some((_, f)) = abs.fold_once(&without, &none) {
        return Err(format!("folded without x != z to {f}"));
    }
    Ok(format!("{with}  =>  {folded}"))
}

fn corpus() -> Check {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus");
    let committed = std::fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .filter(|e| e.as_ref().is_ok_and(|e| e.path().extension().is_some_and(|x| x == "mpl")))
        .count();
    ensure(committed >= 12, || format!("only {committed} programs"))?;
    let mut slowest = Duration::ZERO;
    let mut analyzed = 0;
    for c in CASES.iter().filter(|c| c.expect != [Outcome::Error; 3]) {
        let start = Instant::now();
        let got = outcomes(&analyze(c.name)?);
        let took = start.elapsed();
        slowest = slowest.max(took);
        ensure(took <= Duration::from_secs(10), || format!("{} took {took:?}", c.name))?;
        ensure(got == c.expect, || format!("{}: got {got:?}, want {:?}", c.name, c.expect))?;
        if let Some(i) = c.bug {
            ensure(got[i] != Outcome::True, || format!("{}: seeded bug reported TRUE", c.name))?;
        }
        analyzed += 1;
    }
    let bugs = CASES.iter().filter(|c| c.bug.is_some()).count();
    Ok(format!(
        "{committed} programs committed, {analyzed} analyzed, {bugs} seeded bugs caught, slowest {slowest:?}"
    ))
}

fn int_value(a: &Analysis, x: &str) -> BTreeSet<Option<i64>> {
    a.exit_states
        .iter()
        .map(|h| {
            h.pure.iter().find_map(|p| match p {
                PureAtom::IntVal(v, n) if *v == Var::prog(x) => Some(*n),
                _ => None,
            })
        })
        .collect()
}

fn integer_domain() -> Check {
    let start = Instant::now();
    let five = analyze("int_loop_bound_5")?;
    let t5 = start.elapsed();
    ensure(outcomes(&five) == [Outcome::True; 3], || format!("bound 5: {:?}", outcomes(&five)))?;
    ensure(int_value(&five, "i") == [Some(5)].into(), || {
        format!("bound 5 exits with i in {:?}", int_value(&five, "i"))
    })?;
    let start = Instant::now();
    let six = analyze("int_loop_bound_6")?;
    let t6 = start.elapsed();
    let want = [Outcome::Unknown, Outcome::True, Outcome::True];
    ensure(outcomes(&six) == want, || format!("bound 6: {:?}", outcomes(&six)))?;
    ensure(int_value(&six, "i") == [None].into(), || {
        format!("bound 6 exits with i in {:?}", int_value(&six, "i"))
    })?;
    ensure(t5.max(t6) <= Duration::from_secs(5), || format!("took {t5:?} and {t6:?}"))?;
    Ok(format!("bound 5 TRUE with i = 5, bound 6 UNKNOWN with i unconstrained ({t5:?}, {t6:?})"))
}

const SLL_BUILD: &str = "struct node { struct node* next; };\n\
    int main() { struct node* head; struct node* n; head = NULL;\n\
    while (nondet()) { n = malloc(sizeof(struct node)); n->next = head; head = n; }\n\
    return 0; }";

fn fixpoints() -> Check {
    let mut most = 0;
    for c in CASES.iter().filter(|c| c.expect != [Outcome::Error; 3]) {
        let a = analyze(c.name)?;
        for (l, n) in &a.stats.loop_iterations {
            ensure(*n <= 50, || format!("{}: loop {l} took {n} iterations", c.name))?;
            most = most.max(*n);
        }
    }
    let p = parse_program(SLL_BUILD).map_err(|e| e.to_string())?;
    let a = analyze_program(&p, Config::default()).map_err(|e| e.to_string())?;
    ensure(!a.exit_states.is_empty(), || "no exit state".into())?;
    let target = heap("ls(0+; head, nil)");
    for h in &a.exit_states {
        let h = forget(h, &Var::prog("n"));
        ensure(check_entail(&h, &target), || format!("{h} does not entail {target}"))?;
    }
    Ok(format!(
        "most iterations at a loop head {most}; {} exit states entail {target}",
        a.exit_states.len()
    ))
}

fn fold_soundness() -> Check {
    let abs = Abstraction::default();
    let none = BTreeSet::new();
    let heaps = foldable(0x5eed, 200);
    let mut folds = 0;
    for h in &heaps {
        let mut cur = h.clone();
        while let Some((_, next)) = abs.fold_once(&cur, &none) {
            ensure(check_entail(&cur, &next), || format!("{cur} does not entail {next}"))?;
            folds += 1;
            cur = next;
        }
    }
    Ok(format!("{} heaps, {folds} folds, all entailed", heaps.len()))
}

fn summary_reuse() -> Check {
    let a = analyze("builder_called_twice")?;
    let builds = a.stats.analyses.get("build").copied().unwrap_or(0);
    ensure(builds == 1, || format!("build analyzed {builds} times"))?;
    let calls = source("builder_called_twice").matches("= build();").count();
    ensure(calls == 2, || format!("{calls} calls in the program"))?;
    Ok(format!(
        "build called twice, analyzed once ({} node visits)",
        a.stats.node_visits["build"]
    ))
}

fn tsll_classification() -> Check {
    let p = parse_program(&source("tsll_as_dll")).map_err(|e| e.to_string())?;
    let kinds = classify_structs(&p);
    let want = StructKind::Dll {
        next: "next".into(),
        prev: "inner".into(),
    };
    ensure(kinds.get("tnode") == Some(&want), || format!("classified as {:?}", kinds.get("tnode")))?;
    Ok("struct { next: self*, inner: self* } classified as DLL with inner as back link".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("solver agrees with the oracle", solver_agrees_with_oracle),
        ("two-cell fold needs the disequality", two_cell_fold),
        ("unbounded-list corpus", corpus),
        ("integer range", integer_domain),
        ("loop heads stabilize", fixpoints),
        ("folds are entailed", fold_soundness),
        ("summaries are reused", summary_reuse),
        ("two self links classify as DLL", tsll_classification),
    ];
    let limits = [300.0, 1.0, 180.0, 10.0, 60.0, 120.0, 10.0, 1.0];
    let mut failed = 0;
    for (i, ((name, check), limit)) in criteria.iter().zip(limits).enumerate() {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        let result = result.and_then(|d| {
            if secs <= limit {
                Ok(d)
            } else {
                Err(format!("took {secs:.2}s, limit {limit}s"))
            }
        });
        match result {
            Ok(detail) => println!("PASS {}: {name} ({detail}) [{secs:.2}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}: {name}: {why} [{secs:.2}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
