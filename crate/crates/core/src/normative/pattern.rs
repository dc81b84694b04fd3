use serde::{Deserialize, Serialize};

/// Number of tracks spanning a quarter of the annulus.
pub const QUADRANT_TRACKS: usize = 8;

/// Loss patterns in decreasing severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternClass {
    Diffuse,
    Wedge,
    OtherGrouping,
    Isolated,
    None,
}

/// Classifies a low-superpixel mask laid out as `track · n_segments +
/// segment`. Components use 4-adjacency with tracks wrapping around.
pub fn classify_pattern(mask: &[bool], n_tracks: usize, n_segments: usize) -> PatternClass {
    assert_eq!(mask.len(), n_tracks * n_segments, "mask size");
    if !mask.iter().any(|&m| m) {
        return PatternClass::None;
    }
    let idx = |t: usize, s: usize| t * n_segments + s;

    // Diffuse: more than a quadrant of cyclically contiguous full-width
    // tracks. Such tracks always lie in one component.
    let full: Vec<bool> = (0..n_tracks).map(|t| (0..n_segments).all(|s| mask[idx(t, s)])).collect();
    let longest = if full.iter().all(|&f| f) {
        n_tracks
    } else {
        let mut best = 0;
        let mut run = 0;
        for k in 0..2 * n_tracks {
            if full[k % n_tracks] {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
        best
    };
    if longest > QUADRANT_TRACKS {
        return PatternClass::Diffuse;
    }

    let mut label = vec![usize::MAX; mask.len()];
    let mut wedge = false;
    let mut grouping = false;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || label[start] != usize::MAX {
            continue;
        }
        label[start] = start;
        stack.push(start);
        let (mut size, mut inner, mut outer) = (0usize, false, false);
        while let Some(c) = stack.pop() {
            size += 1;
            let (t, s) = (c / n_segments, c % n_segments);
            inner |= s == 0;
            outer |= s + 1 == n_segments;
            let mut nb = vec![idx((t + 1) % n_tracks, s), idx((t + n_tracks - 1) % n_tracks, s)];
            if s > 0 {
                nb.push(idx(t, s - 1));
            }
            if s + 1 < n_segments {
                nb.push(idx(t, s + 1));
            }
            for n in nb {
                if mask[n] && label[n] == usize::MAX {
                    label[n] = start;
                    stack.push(n);
                }
            }
        }
        wedge |= inner && outer;
        grouping |= size >= 3;
    }
    if wedge {
        PatternClass::Wedge
    } else if grouping {
        PatternClass::OtherGrouping
    } else {
        PatternClass::Isolated
    }
}
