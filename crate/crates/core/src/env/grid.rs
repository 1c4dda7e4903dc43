//! Grid worlds with wall segments between horizontally adjacent cells, as in
//! the classic taxi map. `x` is the column, `y` the row (row 0 at the top).

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    North,
    South,
    East,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::North, Direction::South, Direction::East, Direction::West];

    /// The two directions at right angles.
    pub fn perpendicular(self) -> [Direction; 2] {
        match self {
            Direction::North | Direction::South => [Direction::East, Direction::West],
            Direction::East | Direction::West => [Direction::North, Direction::South],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Landmark {
    pub name: String,
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    /// `(row, col)`: a wall between `(col, row)` and `(col + 1, row)`.
    pub walls: Vec<(usize, usize)>,
    pub landmarks: Vec<Landmark>,
}

/// Probability of moving in the intended direction.
pub const INTENDED: f64 = 0.8;
/// Probability of slipping to each perpendicular direction.
pub const SLIP: f64 = 0.1;

impl GridLayout {
    /// The classic 5×5 taxi map scaled by `k`: every cell becomes a `k×k`
    /// block, walls run along the scaled block edges and landmarks keep
    /// their corner positions.
    pub fn classic_taxi(k: usize) -> Self {
        let n = 5 * k;
        let mut walls = Vec::new();
        for &(row, col) in &[(0, 1), (1, 1), (3, 0), (4, 0), (3, 2), (4, 2)] {
            for r in row * k..(row + 1) * k {
                walls.push((r, (col + 1) * k - 1));
            }
        }
        let mark = |name: &str, x, y| Landmark {
            name: name.to_string(),
            x,
            y,
        };
        Self {
            width: n,
            height: n,
            walls,
            landmarks: vec![mark("R", 0, 0), mark("G", n - 1, 0), mark("Y", 0, n - 1), mark("B", 3 * k, n - 1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("grid must be non-empty".into()));
        }
        for &(r, c) in &self.walls {
            if r >= self.height || c + 1 >= self.width {
                return Err(Error::Config(alloc::format!("wall ({r}, {c}) outside the grid")));
            }
        }
        for l in &self.landmarks {
            if l.x >= self.width || l.y >= self.height {
                return Err(Error::Config(alloc::format!("landmark {} outside the grid", l.name)));
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn cell(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.width, cell / self.width)
    }

    pub fn landmark(&self, name: &str) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.name == name)
    }

    fn wall_between(&self, row: usize, left_col: usize) -> bool {
        self.walls.contains(&(row, left_col))
    }

    /// Deterministic move; blocked moves stay in place.
    pub fn step(&self, x: usize, y: usize, dir: Direction) -> (usize, usize) {
        match dir {
            Direction::North if y > 0 => (x, y - 1),
            Direction::South if y + 1 < self.height => (x, y + 1),
            Direction::East if x + 1 < self.width && !self.wall_between(y, x) => (x + 1, y),
            Direction::West if x > 0 && !self.wall_between(y, x - 1) => (x - 1, y),
            _ => (x, y),
        }
    }

    /// Outcomes of a noisy move, merged per destination cell.
    pub fn noisy_step(&self, x: usize, y: usize, dir: Direction) -> Vec<(usize, f64)> {
        let [a, b] = dir.perpendicular();
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(3);
        for (d, p) in [(dir, INTENDED), (a, SLIP), (b, SLIP)] {
            let (nx, ny) = self.step(x, y, d);
            let cell = self.cell(nx, ny);
            match out.iter_mut().find(|(c, _)| *c == cell) {
                Some(entry) => entry.1 += p,
                None => out.push((cell, p)),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_walls_block() {
        let g = GridLayout::classic_taxi(1);
        g.validate().unwrap();
        // wall between columns 1 and 2 on the top two rows
        assert_eq!(g.step(1, 0, Direction::East), (1, 0));
        assert_eq!(g.step(2, 1, Direction::West), (2, 1));
        assert_eq!(g.step(1, 2, Direction::East), (2, 2));
        assert_eq!(g.step(0, 4, Direction::East), (0, 4));
        assert_eq!(g.step(0, 0, Direction::North), (0, 0));
    }

    #[test]
    fn noisy_interior_move() {
        let g = GridLayout::classic_taxi(1);
        let out = g.noisy_step(2, 2, Direction::North);
        assert_eq!(out, vec![(g.cell(2, 1), 0.8), (g.cell(3, 2), 0.1), (g.cell(1, 2), 0.1)]);
    }

    #[test]
    fn blocked_mass_stays() {
        let g = GridLayout::classic_taxi(1);
        let out = g.noisy_step(0, 0, Direction::North);
        let total: f64 = out.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let stay = out.iter().find(|(c, _)| *c == 0).unwrap().1;
        assert!((stay - 0.9).abs() < 1e-12);
    }

    #[test]
    fn scaled_landmarks() {
        let g = GridLayout::classic_taxi(2);
        assert_eq!(g.width, 10);
        let b = g.landmark("B").unwrap();
        assert_eq!((b.x, b.y), (6, 9));
        assert_eq!(g.walls.len(), 12);
    }
}
