use std::fmt;

use super::{Channel, ChannelProfile, ModelError};

/// `Ns x Np` matrix of channel indices; row `i` is the sensing sequence of SU
/// `i`, cell `0` means the SU does not sense in that mini-slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SensingMatrix {
    ns: usize,
    width: usize,
    cells: Vec<u16>,
}

impl SensingMatrix {
    pub fn zeros(ns: usize, width: usize) -> Self {
        Self {
            ns,
            width,
            cells: vec![0; ns * width],
        }
    }

    pub fn from_rows<R: AsRef<[u16]>>(rows: &[R]) -> Result<Self, ModelError> {
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut cells = Vec::with_capacity(rows.len() * width);
        for row in rows {
            let row = row.as_ref();
            if row.len() != width {
                return Err(ModelError::RaggedMatrix {
                    first: width,
                    other: row.len(),
                });
            }
            cells.extend_from_slice(row);
        }
        Ok(Self {
            ns: rows.len(),
            width,
            cells,
        })
    }

    pub(crate) fn from_cells(ns: usize, width: usize, cells: Vec<u16>) -> Self {
        debug_assert_eq!(cells.len(), ns * width);
        Self { ns, width, cells }
    }

    pub fn ns(&self) -> usize {
        self.ns
    }

    /// Number of mini-slot columns.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, su: usize) -> &[u16] {
        &self.cells[su * self.width..(su + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u16]> {
        (0..self.ns).map(move |i| self.row(i))
    }

    pub fn cells(&self) -> &[u16] {
        &self.cells
    }

    /// Entry for SU `su` (zero-based) at mini-slot `m` (one-based).
    pub fn entry(&self, su: usize, m: usize) -> Option<Channel> {
        Channel::new(self.cells[su * self.width + m - 1])
    }

    pub fn set(&mut self, su: usize, m: usize, ch: Option<Channel>) {
        self.cells[su * self.width + m - 1] = ch.map_or(0, Channel::get);
    }

    /// Nonzero channels of one row, in sensing order.
    pub fn sequence(&self, su: usize) -> Vec<Channel> {
        self.row(su).iter().filter_map(|&c| Channel::new(c)).collect()
    }

    pub fn nonzero(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    /// Appearances of each channel id `1..=max`; index 0 is unused.
    pub fn channel_counts(&self, max: usize) -> Vec<usize> {
        let mut counts = vec![0; max + 1];
        for &c in &self.cells {
            if let Some(slot) = counts.get_mut(usize::from(c)) {
                *slot += 1;
            }
        }
        counts
    }

    pub fn to_rows(&self) -> Vec<Vec<u16>> {
        self.rows().map(<[u16]>::to_vec).collect()
    }
}

impl fmt::Display for SensingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, row) in self.rows().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "[")?;
            for (j, c) in row.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{c}")?;
            }
            write!(f, "]")?;
        }
        write!(f, "]")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    WidthMismatch { expected: usize, found: usize },
    EntryOutOfRange { su: usize, mini_slot: usize, value: u16 },
    ChannelRepeated { channel: u16, count: usize, cap: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WidthMismatch { expected, found } => {
                write!(f, "matrix has {found} columns, profile has {expected} channels")
            }
            Violation::EntryOutOfRange {
                su,
                mini_slot,
                value,
            } => write!(
                f,
                "entry out of range: SU {} mini-slot {mini_slot} holds {value}",
                su + 1
            ),
            Violation::ChannelRepeated {
                channel,
                count,
                cap,
            } => write!(f, "channel {channel} repeated {count} times (cap {cap})"),
        }
    }
}

/// Structural check of a matrix against a profile and a per-channel
/// repetition cap. Collects every violation instead of stopping at the first.
pub fn validate_matrix(
    sm: &SensingMatrix,
    profile: &ChannelProfile,
    repeat_cap: usize,
) -> Result<(), Vec<Violation>> {
    let np = profile.np();
    let mut violations = Vec::new();
    if sm.width() != np {
        violations.push(Violation::WidthMismatch {
            expected: np,
            found: sm.width(),
        });
    }
    for su in 0..sm.ns() {
        for (j, &value) in sm.row(su).iter().enumerate() {
            if usize::from(value) > np {
                violations.push(Violation::EntryOutOfRange {
                    su,
                    mini_slot: j + 1,
                    value,
                });
            }
        }
    }
    for (channel, &count) in sm.channel_counts(np).iter().enumerate().skip(1) {
        if count > repeat_cap {
            violations.push(Violation::ChannelRepeated {
                channel: channel as u16,
                count,
                cap: repeat_cap,
            });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Parses `[[1,2],[0,0]]` or the compact `1,2;0,0` form.
pub fn parse_matrix(text: &str) -> Result<SensingMatrix, ModelError> {
    let trimmed = text.trim();
    let rows = if trimmed.starts_with('[') {
        parse_bracketed(text)?
    } else {
        parse_compact(text)?
    };
    SensingMatrix::from_rows(&rows)
}

fn syntax(offset: usize, reason: impl Into<String>) -> ModelError {
    ModelError::MatrixSyntax {
        offset,
        reason: reason.into(),
    }
}

fn parse_cell(token: &str, offset: usize) -> Result<u16, ModelError> {
    let token = token.trim();
    if token.is_empty() {
        return Err(syntax(offset, "empty entry"));
    }
    token
        .parse::<u16>()
        .map_err(|_| syntax(offset, format!("`{token}` is not a channel index")))
}

fn parse_compact(text: &str) -> Result<Vec<Vec<u16>>, ModelError> {
    let mut rows = Vec::new();
    let mut offset = 0;
    for row in text.split(';') {
        let mut cells = Vec::new();
        let mut cell_offset = offset;
        for token in row.split(',') {
            cells.push(parse_cell(token, cell_offset)?);
            cell_offset += token.len() + 1;
        }
        rows.push(cells);
        offset += row.len() + 1;
    }
    Ok(rows)
}

fn parse_bracketed(text: &str) -> Result<Vec<Vec<u16>>, ModelError> {
    let bytes = text.as_bytes();
    let mut pos = 0;
    let skip_ws = |pos: &mut usize| {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
    };
    let expect = |pos: &mut usize, ch: u8| -> Result<(), ModelError> {
        if bytes.get(*pos) == Some(&ch) {
            *pos += 1;
            Ok(())
        } else {
            Err(syntax(*pos, format!("expected `{}`", ch as char)))
        }
    };

    skip_ws(&mut pos);
    expect(&mut pos, b'[')?;
    let mut rows = Vec::new();
    skip_ws(&mut pos);
    if bytes.get(pos) == Some(&b']') {
        pos += 1;
    } else {
        loop {
            skip_ws(&mut pos);
            expect(&mut pos, b'[')?;
            let mut row = Vec::new();
            loop {
                skip_ws(&mut pos);
                let start = pos;
                while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                    pos += 1;
                }
                row.push(parse_cell(&text[start..pos], start)?);
                skip_ws(&mut pos);
                match bytes.get(pos) {
                    Some(b',') => pos += 1,
                    Some(b']') => {
                        pos += 1;
                        break;
                    }
                    _ => return Err(syntax(pos, "expected `,` or `]` inside row")),
                }
            }
            rows.push(row);
            skip_ws(&mut pos);
            match bytes.get(pos) {
                Some(b',') => pos += 1,
                Some(b']') => {
                    pos += 1;
                    break;
                }
                _ => return Err(syntax(pos, "expected `,` or `]` between rows")),
            }
        }
    }
    skip_ws(&mut pos);
    if pos != bytes.len() {
        return Err(syntax(pos, "trailing characters"));
    }
    Ok(rows)
}
