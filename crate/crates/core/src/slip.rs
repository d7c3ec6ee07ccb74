//! SLIP framing (RFC 1055) for the border-router serial line.
//!
//! Every encoded frame starts and ends with END, the way tunslip writes
//! them. The decoder is a streaming state machine: input may be split at any
//! byte boundary across calls.

pub const END: u8 = 0xC0;
pub const ESC: u8 = 0xDB;
pub const ESC_END: u8 = 0xDC;
pub const ESC_ESC: u8 = 0xDD;

/// Frames longer than this are treated as line noise and discarded.
pub const MAX_DECODED_FRAME: usize = 4096;

/// Append the SLIP encoding of `payload` to `out`.
pub fn encode_into(payload: &[u8], out: &mut Vec<u8>) {
    out.push(END);
    for &b in payload {
        match b {
            END => out.extend_from_slice(&[ESC, ESC_END]),
            ESC => out.extend_from_slice(&[ESC, ESC_ESC]),
            _ => out.push(b),
        }
    }
    out.push(END);
}

pub fn slip_encode(payload: &[u8]) -> Vec<u8> {
    let escapes = payload.iter().filter(|&&b| b == END || b == ESC).count();
    let mut out = Vec::with_capacity(payload.len() + escapes + 2);
    encode_into(payload, &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Normal,
    Escaped,
    /// Bad escape or overlong frame seen; skip to the next END.
    Discarding,
}

#[derive(Debug, Clone)]
pub struct SlipDecoder {
    buf: Vec<u8>,
    state: State,
    malformed: u64,
    frames: u64,
}

impl Default for SlipDecoder {
    fn default() -> Self {
        SlipDecoder {
            buf: Vec::new(),
            state: State::Normal,
            malformed: 0,
            frames: 0,
        }
    }
}

impl SlipDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Frames dropped because of an invalid escape or excessive length.
    pub fn malformed(&self) -> u64 {
        self.malformed
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    /// Bytes of the frame currently being assembled.
    pub fn partial_len(&self) -> usize {
        self.buf.len()
    }

    /// Feed bytes; returns every frame completed by this chunk.
    pub fn push(&mut self, input: &[u8]) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        for &b in input {
            match (self.state, b) {
                (_, END) if self.state != State::Escaped => {
                    if self.state == State::Normal && !self.buf.is_empty() {
                        self.frames += 1;
                        out.push(std::mem::take(&mut self.buf));
                    }
                    self.buf.clear();
                    self.state = State::Normal;
                }
                (State::Discarding, _) => {}
                (State::Normal, ESC) => self.state = State::Escaped,
                (State::Normal, _) => self.accept(b),
                (State::Escaped, ESC_END) => {
                    self.state = State::Normal;
                    self.accept(END);
                }
                (State::Escaped, ESC_ESC) => {
                    self.state = State::Normal;
                    self.accept(ESC);
                }
                (State::Escaped, other) => {
                    self.malformed += 1;
                    self.buf.clear();
                    // An END right after ESC still terminates the frame.
                    self.state = if other == END { State::Normal } else { State::Discarding };
                }
            }
        }
        out
    }

    fn accept(&mut self, b: u8) {
        if self.buf.len() >= MAX_DECODED_FRAME {
            self.malformed += 1;
            self.buf.clear();
            self.state = State::Discarding;
        } else {
            self.buf.push(b);
        }
    }
}

/// Decode a complete byte stream in one go.
pub fn slip_decode(stream: &[u8]) -> Vec<Vec<u8>> {
    SlipDecoder::new().push(stream)
}
