//! Breadth-first navigation over (cell, heading) states.

use std::collections::VecDeque;

use super::{ActionKind, Cell, Heading};

/// Shortest action sequence (MoveAhead / RotateLeft / RotateRight) from
/// `(start, heading)` to any pose standing on a passable cell and facing
/// `target`. Returns an empty plan when already in place, `None` when
/// unreachable. Neighbour expansion order is fixed, so plans are deterministic.
pub fn plan_to_face(
    start: Cell,
    heading: Heading,
    target: Cell,
    bounds: (usize, usize),
    passable: impl Fn(Cell) -> bool,
) -> Option<Vec<ActionKind>> {
    plan_to(start, heading, bounds, &passable, |c, h| c.step(h) == Some(target))
}

/// Shortest plan to stand on `goal` with any heading.
pub fn plan_to_cell(
    start: Cell,
    heading: Heading,
    goal: Cell,
    bounds: (usize, usize),
    passable: impl Fn(Cell) -> bool,
) -> Option<Vec<ActionKind>> {
    plan_to(start, heading, bounds, &passable, |c, _| c == goal)
}

fn plan_to(
    start: Cell,
    heading: Heading,
    (h, w): (usize, usize),
    passable: &dyn Fn(Cell) -> bool,
    done: impl Fn(Cell, Heading) -> bool,
) -> Option<Vec<ActionKind>> {
    if start.row >= h || start.col >= w {
        return None;
    }
    let key = |c: Cell, hd: Heading| (c.row * w + c.col) * 4 + hd.index();
    let mut prev: Vec<Option<(usize, ActionKind)>> = vec![None; h * w * 4];
    let mut seen = vec![false; h * w * 4];
    let mut q = VecDeque::new();
    seen[key(start, heading)] = true;
    q.push_back((start, heading));
    while let Some((c, hd)) = q.pop_front() {
        if done(c, hd) {
            let mut actions = Vec::new();
            let mut k = key(c, hd);
            while let Some((p, a)) = prev[k] {
                actions.push(a);
                k = p;
            }
            actions.reverse();
            return Some(actions);
        }
        let moves = [
            (
                ActionKind::MoveAhead,
                c.step(hd).filter(|n| n.row < h && n.col < w && passable(*n)),
                hd,
            ),
            (ActionKind::RotateLeft, Some(c), hd.left()),
            (ActionKind::RotateRight, Some(c), hd.right()),
        ];
        for (a, nc, nh) in moves {
            let Some(nc) = nc else { continue };
            let nk = key(nc, nh);
            if !seen[nk] {
                seen[nk] = true;
                prev[nk] = Some((key(c, hd), a));
                q.push_back((nc, nh));
            }
        }
    }
    None
}

/// Path lengths (in moves, ignoring turns) from `start` to every cell through
/// passable cells; `None` for unreachable ones.
pub fn distances(start: Cell, (h, w): (usize, usize), passable: impl Fn(Cell) -> bool) -> Vec<Option<usize>> {
    let mut d = vec![None; h * w];
    if start.row >= h || start.col >= w {
        return d;
    }
    d[start.row * w + start.col] = Some(0);
    let mut q = VecDeque::from([start]);
    while let Some(c) = q.pop_front() {
        let dc = d[c.row * w + c.col].expect("queued cells have a distance");
        for hd in Heading::ALL {
            if let Some(n) = c.step(hd) {
                if n.row < h && n.col < w && d[n.row * w + n.col].is_none() && passable(n) {
                    d[n.row * w + n.col] = Some(dc + 1);
                    q.push_back(n);
                }
            }
        }
    }
    d
}
