//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers (run with `--nocapture` to see them).

mod common;

use lgr::agent::{run_episode, EpisodeConfig, EpisodeResult, FrontierChoice};
use lgr::eval::{compute_spl, render_csv, run_batch, BatchConfig, Method};
use lgr::grid::Cell;
use lgr::mapping::{detect_frontiers, BeliefMap, CellState};
use lgr::planner::{astar, PlanMode};
use lgr::prompts::{
    build_ranking_prompt, build_room_prompt, parse_ranking_response, parse_room_response,
    ParsedRanking, PromptError, RankedStep,
};
use lgr::rankers::{LlmRanker, RankerError};
use lgr::ranking::{fuse, ScoreVector};
use lgr::world::{generate_scenario, GenParams, Pose, RoomCategoryList, SensorConfig, Terrain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::SQRT_2;
use std::time::Instant;

/// Criterion 1: on three generated apartment worlds (seeds 1, 2, 3; 48x48;
/// 6-10 rooms) with 100 paired episodes each, the oracle-ranked method beats
/// the random-frontier baseline on every world, with a mean relative SPL
/// improvement of at least 5%, in under five minutes.
#[test]
fn criterion_1_ranked_beats_random_on_every_world() {
    let started = Instant::now();
    let config = BatchConfig {
        generation_seeds: vec![1, 2, 3],
        episodes_per_scenario: 100,
        methods: vec![Method::LgrOracle, Method::RandomFrontier],
        master_seed: 42,
        ..BatchConfig::default()
    };
    let report = run_batch(&config).expect("batch runs");

    let spl_of = |method: Method, scenario: &str| {
        report
            .summaries
            .iter()
            .find(|s| s.method == method && s.scenario == scenario)
            .map(|s| s.spl)
            .expect("summary present")
    };
    let mut improvements = Vec::new();
    for name in &report.scenario_names {
        let lgr = spl_of(Method::LgrOracle, name);
        let random = spl_of(Method::RandomFrontier, name);
        assert!(
            random > 0.0,
            "{name}: random-frontier SPL is zero, comparison degenerate"
        );
        assert!(
            lgr > random,
            "{name}: ranked SPL {lgr:.3} not strictly above random {random:.3}"
        );
        improvements.push((lgr - random) / random);
    }
    let mean_improvement = improvements.iter().sum::<f64>() / improvements.len() as f64;
    assert!(
        mean_improvement >= 0.05,
        "mean relative improvement {mean_improvement:.3} below 5%"
    );
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 300,
        "headline batch took {elapsed:?}, expected under five minutes"
    );
    println!(
        "ACCEPTANCE 1: PASS — ranked beats random on all 3 worlds, mean improvement {:.0}%, {:.1}s",
        mean_improvement * 100.0,
        elapsed.as_secs_f64()
    );
}

fn result(success: bool, traveled: f64, optimal: f64) -> EpisodeResult {
    EpisodeResult {
        success,
        traveled,
        optimal,
        num_scans: 1,
        num_bumps: 0,
        failure_reason: None,
        decision_log: Vec::new(),
    }
}

/// Criterion 2: the SPL unit examples hold to 1e-12.
#[test]
fn criterion_2_spl_unit_values() {
    let one = compute_spl(&[result(true, 7.0, 7.0)]).unwrap();
    assert!((one - 1.0).abs() < 1e-12);
    let zero = compute_spl(&[result(false, 7.0, 7.0)]).unwrap();
    assert!(zero.abs() < 1e-12);
    let quarter = compute_spl(&[result(true, 10.0, 5.0), result(false, 1.0, 5.0)]).unwrap();
    assert!((quarter - 0.25).abs() < 1e-12);
    println!("ACCEPTANCE 2: PASS — SPL unit examples exact to 1e-12");
}

/// Independent shortest-path oracle: heap-based Dijkstra keyed on raw f64
/// bits, with its own edge derivation.
fn dijkstra_oracle(belief: &BeliefMap, start: Cell, goal: Cell, mode: PlanMode) -> Option<f64> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let (w, h) = (belief.width() as i32, belief.height() as i32);
    let passable = |c: Cell| {
        c.x >= 0
            && c.y >= 0
            && c.x < w
            && c.y < h
            && matches!(
                (belief.state(c), mode),
                (CellState::Free, _) | (CellState::Unknown, PlanMode::OptimisticUnknown)
            )
    };
    if goal != start && !passable(goal) {
        return None;
    }
    let idx = |c: Cell| (c.y * w + c.x) as usize;
    let mut dist = vec![f64::INFINITY; (w * h) as usize];
    let mut heap = BinaryHeap::new();
    dist[idx(start)] = 0.0;
    heap.push(Reverse((0.0f64.to_bits(), start.x, start.y)));
    while let Some(Reverse((bits, x, y))) = heap.pop() {
        let cell = Cell::new(x, y);
        let d = f64::from_bits(bits);
        if d > dist[idx(cell)] {
            continue;
        }
        if cell == goal {
            return Some(d);
        }
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let n = Cell::new(x + dx, y + dy);
            if passable(n) && d + 1.0 < dist[idx(n)] {
                dist[idx(n)] = d + 1.0;
                heap.push(Reverse(((d + 1.0).to_bits(), n.x, n.y)));
            }
        }
        for (dx, dy) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
            let n = Cell::new(x + dx, y + dy);
            if passable(n)
                && passable(Cell::new(x + dx, y))
                && passable(Cell::new(x, y + dy))
                && d + SQRT_2 < dist[idx(n)]
            {
                dist[idx(n)] = d + SQRT_2;
                heap.push(Reverse(((d + SQRT_2).to_bits(), n.x, n.y)));
            }
        }
    }
    None
}

/// Criterion 3: A* equals an independent Dijkstra oracle on 200 random
/// 32x32 three-state beliefs at 30% obstacle density, in both planning
/// modes, including NoPath agreement.
#[test]
fn criterion_3_astar_matches_dijkstra() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut solvable = 0u32;
    let mut blocked = 0u32;
    for case in 0..200 {
        let mut belief = BeliefMap::new_unknown(32, 32);
        let mut free = Vec::new();
        for y in 0..32i32 {
            for x in 0..32i32 {
                let c = Cell::new(x, y);
                if rng.gen_bool(0.30) {
                    belief.observe(c, Terrain::Occupied).unwrap();
                } else if rng.gen_bool(0.7) {
                    belief.observe(c, Terrain::Free).unwrap();
                    free.push(c);
                }
                // else: left unknown
            }
        }
        if free.is_empty() {
            continue;
        }
        let start = free[rng.gen_range(0..free.len())];
        // Mostly free goals (reachability interesting), some fully random
        // ones (NoPath agreement on non-traversable goals).
        let goal = if rng.gen_bool(0.7) {
            free[rng.gen_range(0..free.len())]
        } else {
            Cell::new(rng.gen_range(0..32), rng.gen_range(0..32))
        };
        for mode in [PlanMode::KnownFreeOnly, PlanMode::OptimisticUnknown] {
            let ours = astar(&belief, start, goal, mode).unwrap();
            let oracle = dijkstra_oracle(&belief, start, goal, mode);
            match (&ours, &oracle) {
                (None, None) => blocked += 1,
                (Some(path), Some(d)) => {
                    assert!(
                        (path.length - d).abs() < 1e-9,
                        "case {case} {mode:?}: astar {} vs dijkstra {d}",
                        path.length
                    );
                    solvable += 1;
                }
                _ => panic!("case {case} {mode:?}: reachability mismatch {ours:?} vs {oracle:?}"),
            }
        }
    }
    assert!(solvable > 100, "too few solvable instances ({solvable})");
    assert!(blocked > 10, "too few NoPath instances ({blocked})");
    println!(
        "ACCEPTANCE 3: PASS — A* = Dijkstra on {solvable} solvable and {blocked} NoPath instances"
    );
}

/// Criterion 4: frontier detection equals the definitional per-cell scan on
/// 200 random 16x16 beliefs.
#[test]
fn criterion_4_frontier_detection_matches_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut checked = 0u32;
    for _ in 0..200 {
        let mut belief = BeliefMap::new_unknown(16, 16);
        for y in 0..16i32 {
            for x in 0..16i32 {
                match rng.gen_range(0..3) {
                    0 => {}
                    1 => belief.observe(Cell::new(x, y), Terrain::Free).unwrap(),
                    _ => belief.observe(Cell::new(x, y), Terrain::Occupied).unwrap(),
                }
            }
        }
        let mut expected = Vec::new();
        for y in 0..16i32 {
            for x in 0..16i32 {
                let c = Cell::new(x, y);
                if belief.state(c) != CellState::Free {
                    continue;
                }
                let unknown_neighbor =
                    [(0, -1), (-1, 0), (1, 0), (0, 1)].iter().any(|&(dx, dy)| {
                        let n = Cell::new(x + dx, y + dy);
                        belief.in_bounds(n) && belief.state(n) == CellState::Unknown
                    });
                if unknown_neighbor {
                    expected.push(c);
                }
            }
        }
        assert_eq!(detect_frontiers(&belief), expected);
        checked += 1;
    }
    println!(
        "ACCEPTANCE 4: PASS — detect_frontiers matched the definitional scan on {checked} beliefs"
    );
}

fn random_score_vector(rng: &mut ChaCha8Rng, max_ids: u64) -> ScoreVector {
    let n = rng.gen_range(0..8usize);
    let mut entries = Vec::new();
    let mut used = std::collections::HashSet::new();
    for _ in 0..n {
        let id = rng.gen_range(0..max_ids);
        if used.insert(id) {
            entries.push((id, rng.gen_range(0.0..2.0)));
        }
    }
    ScoreVector::from_entries(entries).unwrap()
}

fn argmax(sv: &ScoreVector) -> Option<u64> {
    let mut best: Option<(u64, f64)> = None;
    for (id, score) in sv.iter() {
        match best {
            Some((_, s)) if score <= s => {}
            Some((bid, s)) if score == s && id > bid => {}
            _ => best = Some((id, score)),
        }
    }
    best.map(|(id, _)| id)
}

/// Criterion 5: fusion commutativity, associativity, permutation
/// independence, and argmax invariance under positive weight rescaling on
/// 1000 randomized cases each.
#[test]
fn criterion_5_rank_fusion_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);

    for _ in 0..1000 {
        let x = random_score_vector(&mut rng, 12);
        let y = random_score_vector(&mut rng, 12);
        let z = random_score_vector(&mut rng, 12);

        // Commutativity is exact in IEEE addition.
        assert_eq!(fuse(&x, &y), fuse(&y, &x));

        // Associativity and permutation independence up to rounding.
        let left = fuse(&fuse(&x, &y), &z);
        let right = fuse(&x, &fuse(&y, &z));
        for (id, s) in left.iter() {
            assert!((s - right.get(id)).abs() <= 1e-12 * s.abs().max(1.0));
        }
        assert_eq!(left.len(), right.len());

        let perm = fuse(&fuse(&z, &x), &y);
        for (id, s) in left.iter() {
            assert!((s - perm.get(id)).abs() <= 1e-12 * s.abs().max(1.0));
        }
    }

    // Argmax invariance under positive rescaling of all weights.
    let mut skipped = 0u32;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=8usize);
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..=1.0)).collect();
        let mut ranks: Vec<u32> = (1..=n as u32).collect();
        for i in (1..n).rev() {
            ranks.swap(i, rng.gen_range(0..=i));
        }
        let scale = rng.gen_range(0.001..1000.0f64);
        let base =
            ScoreVector::from_entries((0..n).map(|i| (i as u64, weights[i] / ranks[i] as f64)))
                .unwrap();
        let scaled = ScoreVector::from_entries(
            (0..n).map(|i| (i as u64, scale * weights[i] / ranks[i] as f64)),
        )
        .unwrap();

        // Guard against floating-point near-ties, which rescaling may
        // legitimately reorder at the last ulp.
        let mut scores: Vec<f64> = base.iter().map(|(_, s)| s).collect();
        scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if scores.len() >= 2 && (scores[0] - scores[1]).abs() < 1e-9 * scores[0] {
            skipped += 1;
            continue;
        }
        assert_eq!(argmax(&base), argmax(&scaled));
    }
    assert!(skipped < 100, "too many degenerate near-tie cases");
    println!(
        "ACCEPTANCE 5: PASS — fusion algebra and argmax scale-invariance on 1000 cases ({skipped} near-ties skipped)"
    );
}

/// Criterion 6: prompt builders match the committed golden files byte for
/// byte; the reference ranking output parses to the documented mapping; 500
/// random render/parse round trips succeed; malformed inputs produce the
/// documented typed errors.
#[test]
fn criterion_6_prompt_protocol() {
    let categories = RoomCategoryList::default();
    let fixture = |name: &str| {
        std::fs::read_to_string(
            std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
                .join("fixtures/prompts")
                .join(name),
        )
        .expect("fixture readable")
    };
    assert_eq!(
        build_room_prompt(&["oven".into(), "sink".into()], &categories),
        fixture("room_prompt_oven_sink.txt")
    );
    assert_eq!(
        build_room_prompt(&[], &categories),
        fixture("room_prompt_empty.txt")
    );
    assert_eq!(
        build_ranking_prompt("red chair", 8).unwrap(),
        fixture("ranking_prompt_red_chair_8.txt")
    );

    // The reference ranking response: step 7 -> rank 1 ... step 4 -> rank 8.
    let reference = "1. living-room from Step 7\n2. living-room from Step 8\n\
                     3. bedroom from Step 2\n4. bedroom from Step 5\n\
                     5. kitchen from Step 1\n6. kitchen from Step 3\n\
                     7. kitchen from Step 6\n8. bathroom from Step 4";
    let parsed = parse_ranking_response(reference, 8).unwrap();
    assert_eq!(parsed.rank_by_step(), vec![5, 3, 6, 8, 4, 7, 1, 2]);
    let by_rank: Vec<u32> = parsed.entries.iter().map(|e| e.step).collect();
    assert_eq!(by_rank, vec![7, 8, 2, 5, 1, 3, 6, 4]);

    // Round trip over random permutations, N <= 16.
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let rooms = [
        "kitchen",
        "bedroom",
        "living room",
        "bathroom",
        "laundry room",
    ];
    for _ in 0..500 {
        let n = rng.gen_range(1..=16usize);
        let mut steps: Vec<u32> = (1..=n as u32).collect();
        for i in (1..n).rev() {
            steps.swap(i, rng.gen_range(0..=i));
        }
        let ranking = ParsedRanking {
            entries: steps
                .iter()
                .enumerate()
                .map(|(i, &step)| RankedStep {
                    rank: i as u32 + 1,
                    room: rooms[rng.gen_range(0..rooms.len())].to_string(),
                    step,
                })
                .collect(),
        };
        let reparsed = parse_ranking_response(&ranking.render(), n).unwrap();
        assert_eq!(reparsed, ranking);
    }

    // Documented typed failures.
    assert!(matches!(
        parse_ranking_response("chatter with no list", 8),
        Err(PromptError::NoRankedBlock)
    ));
    assert!(matches!(
        parse_ranking_response("1. kitchen from Step 1", 8),
        Err(PromptError::CountMismatch {
            expected: 8,
            found: 1
        })
    ));
    assert!(matches!(
        parse_ranking_response("1. kitchen from Step 1\n1. bedroom from Step 2", 2),
        Err(PromptError::DuplicateRank(1))
    ));
    assert!(matches!(
        parse_ranking_response("1. kitchen from Step 2\n2. bedroom from Step 2", 2),
        Err(PromptError::DuplicateStep(2))
    ));
    assert!(matches!(
        parse_ranking_response("1. kitchen from Step 1\n3. bedroom from Step 2", 2),
        Err(PromptError::RankOutOfRange { rank: 3, max: 2 })
    ));
    assert!(matches!(
        parse_ranking_response("1. kitchen from Step 1\n2. bedroom from Step 5", 2),
        Err(PromptError::StepOutOfRange { step: 5, max: 2 })
    ));
    assert!(matches!(
        parse_room_response("Response for od4: attic", &categories),
        Err(PromptError::UnknownCategory(_))
    ));
    assert!(matches!(
        parse_room_response("", &categories),
        Err(PromptError::EmptyResponse)
    ));

    println!("ACCEPTANCE 6: PASS — goldens byte-exact, reference mapping recovered, 500 round trips, typed errors");
}

/// Criterion 7: identical seeds produce byte-identical CSV reports across
/// repeat runs, under concurrent episode execution, and the report schema
/// matches the committed golden file.
#[test]
fn criterion_7_batch_determinism_and_golden_report() {
    let config = BatchConfig {
        generation_seeds: vec![11],
        generation: GenParams {
            width: 24,
            height: 24,
            min_rooms: 3,
            max_rooms: 5,
            ..GenParams::default()
        },
        episodes_per_scenario: 4,
        methods: vec![
            Method::LgrOracle,
            Method::RandomFrontier,
            Method::NearestFrontier,
        ],
        master_seed: 7,
        min_separation: 8.0,
        ..BatchConfig::default()
    };
    let first = render_csv(&run_batch(&config).unwrap()).unwrap();
    let second = render_csv(&run_batch(&config).unwrap()).unwrap();
    assert_eq!(first, second, "repeat batch runs diverged");

    let golden = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/report/golden_batch.csv"),
    )
    .expect("golden report fixture");
    assert_eq!(
        first, golden,
        "report schema or content drifted from golden"
    );
    println!("ACCEPTANCE 7: PASS — byte-identical CSV across runs and against golden");
}

/// Criterion 8: 1000 random small scenarios terminate under every method
/// within budget, with no panics.
#[test]
fn criterion_8_termination_on_random_scenarios() {
    let params = GenParams {
        width: 16,
        height: 16,
        min_rooms: 2,
        max_rooms: 4,
        min_objects_per_room: 1,
        max_objects_per_room: 2,
        ..GenParams::default()
    };
    let mut outcomes = [0u32; 3]; // success, exhausted/budget, total
    for seed in 0..1000u64 {
        let scenario = generate_scenario(seed, &params).expect("generation");
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xDEAD);
        let free = scenario.map.free_cells();
        let start = free[rng.gen_range(0..free.len())];
        let classes = scenario.object_classes();
        let target = classes[rng.gen_range(0..classes.len())].clone();

        for method in 0..4 {
            let choice = match method {
                0 | 1 => FrontierChoice::ArgmaxFused,
                2 => FrontierChoice::RandomUniform,
                _ => FrontierChoice::Nearest,
            };
            let config = EpisodeConfig {
                seed: seed.wrapping_mul(31).wrapping_add(method),
                ..EpisodeConfig::new(target.clone(), Pose::new(start, 0), choice)
            };
            let result = match method {
                0 => {
                    let mut oracle = lgr::rankers::OracleRanker::new(scenario.prior.clone());
                    run_episode(&scenario, &config, Some(&mut oracle))
                }
                1 => {
                    // Live-model stand-in that always returns garbage: every
                    // step exercises the distance-only fallback.
                    let mut llm = LlmRanker::new(|_: &str| Ok("nonsense".to_string()));
                    run_episode(&scenario, &config, Some(&mut llm))
                }
                _ => run_episode(&scenario, &config, None),
            }
            .expect("episode must terminate without error");
            assert!(result.num_scans <= config.budget.max_steps);
            if result.success {
                outcomes[0] += 1;
            } else {
                outcomes[1] += 1;
            }
            outcomes[2] += 1;
        }
    }
    assert_eq!(outcomes[2], 4000);
    println!(
        "ACCEPTANCE 8: PASS — 4000 episodes terminated ({} successes, {} failures)",
        outcomes[0], outcomes[1]
    );
}

/// Criterion 9: stubbed endpoints exercise the success, retry, and fallback
/// paths with the documented outcomes, no network involved.
#[test]
fn criterion_9_live_client_robustness() {
    let request = lgr::rankers::RankerRequest {
        target_object: "plate".into(),
        per_direction_objects: Default::default(),
        categories: RoomCategoryList::default(),
    };

    // Valid output: success on the first attempt of each query.
    let mut ranker = LlmRanker::new(|prompt: &str| Ok(common::valid_chat_answer(prompt)));
    let response = lgr::rankers::Ranker::rank(&mut ranker, &request).unwrap();
    assert_eq!(
        response.direction_ranks.as_slice(),
        &[1, 2, 3, 4, 5, 6, 7, 8]
    );
    assert_eq!(response.transcript.len(), 9);

    // Garbage twice, then valid: succeeds after two retries.
    let calls = std::cell::Cell::new(0u32);
    let mut flaky = LlmRanker::new(|prompt: &str| {
        calls.set(calls.get() + 1);
        if calls.get() <= 2 {
            Ok("???".to_string())
        } else {
            Ok(common::valid_chat_answer(prompt))
        }
    });
    assert!(lgr::rankers::Ranker::rank(&mut flaky, &request).is_ok());
    assert_eq!(calls.get(), 11, "2 retries + 9 successful queries");

    // Always invalid: a typed failure after exhausting retries...
    let mut broken = LlmRanker::new(|_: &str| Ok("not a room".to_string()));
    match lgr::rankers::Ranker::rank(&mut broken, &request) {
        Err(RankerError::RetriesExhausted { attempts: 3, .. }) => {}
        other => panic!("expected RetriesExhausted after 3 attempts, got {other:?}"),
    }

    // ...which the agent maps to the distance-only fallback, not an abort.
    let scenario = common::scenario_from_rows(
        &[
            "##########",
            "#........#",
            "#........#",
            "#........#",
            "##########",
        ],
        &[("plate", 8, 3)],
    );
    let config = EpisodeConfig {
        sensor: SensorConfig {
            max_range: 3,
            detection_dropout: 0.0,
        },
        weights: lgr::ranking::WeightConfig { tau: 3.0 },
        ..EpisodeConfig::new(
            "plate",
            Pose::new(Cell::new(1, 1), 0),
            FrontierChoice::ArgmaxFused,
        )
    };
    let mut broken = LlmRanker::new(|_: &str| Ok("not a room".to_string()));
    let result = run_episode(&scenario, &config, Some(&mut broken)).unwrap();
    assert!(
        result.success,
        "fallback exploration should still find the plate"
    );
    assert!(
        result
            .decision_log
            .iter()
            .any(|r| r.ranker_fallback.is_some()),
        "fallback must be recorded in the decision log"
    );

    println!("ACCEPTANCE 9: PASS — success, retry, and fallback paths behave as documented");
}
