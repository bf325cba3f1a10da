//! Distributed data-parallel training: identical model replicas consume
//! disjoint shards, run forward/backward locally, average gradients with an
//! allreduce, and take the same optimizer step everywhere.
//!
//! Two transports implement the collective contract: an in-process channel
//! mesh (threads, deterministic, used by tests and single-machine runs) and
//! TCP sockets with a rank-0 rendezvous for multi-process runs. Collectives
//! must be invoked by all ranks in identical order; a missing participant
//! surfaces as a timeout rather than a deadlock. Failure handling is
//! fail-stop: any rank error aborts the whole job with diagnostics.
//!
//! Gradient averaging uses mean reduction, so with equal local batch sizes
//! a W-worker step is mathematically the same update as one large batch of
//! W times the local size. No learning-rate scaling is applied across world
//! sizes.

use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::dataload::{eval_batches, make_loader, shard_indices, Batch, DataSource, LoadError};
use crate::gcnn::{
    adamw_step, backward, degree_stat, forward, init_params, mse_loss, save_checkpoint,
    Evaluation, GcnnError, Hyper, ModelConfig, ModelState, Scalar, TypedBatch,
};
use crate::graphenc::Splits;
use crate::wire::{self, Cursor};

pub use crate::gcnn::evaluate;

/// Decorrelates the sharding shuffle from model initialization, which uses
/// the run seed directly.
const DATA_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Error)]
pub enum DdpError {
    #[error("transport failure: {0}")]
    TransportFailure(String),
    #[error("rank {waiting} timed out: {detail}")]
    Timeout { waiting: u32, detail: String },
    #[error("tensor shape mismatch across ranks: {expected} vs {found} elements")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("rank {rank} failed: {detail}")]
    RankFailed { rank: u32, detail: String },
    #[error("invalid world size {0}")]
    InvalidWorld(u32),
    #[error(transparent)]
    Gcnn(#[from] GcnnError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Point-to-point byte transport between ranks. `send` and `recv` take
/// `&self` so a collective may overlap an outgoing transfer with a blocking
/// receive; implementations must support that.
pub trait Transport: Send + Sync {
    fn rank(&self) -> u32;
    fn world_size(&self) -> u32;
    fn send(&self, to: u32, payload: &[u8]) -> Result<(), DdpError>;
    fn recv(&self, from: u32) -> Result<Vec<u8>, DdpError>;
}

// ---------------------------------------------------------------------------
// In-process mesh

pub struct InProcTransport {
    rank: u32,
    world: u32,
    timeout: Duration,
    senders: Vec<Option<Sender<Vec<u8>>>>,
    receivers: Vec<Option<Mutex<Receiver<Vec<u8>>>>>,
}

/// Builds a fully connected channel mesh for `world_size` ranks; each
/// returned transport is moved into its worker thread.
pub fn in_proc_mesh(world_size: u32, timeout: Duration) -> Vec<InProcTransport> {
    let w = world_size as usize;
    let mut slots: Vec<Vec<(Option<Sender<Vec<u8>>>, Option<Mutex<Receiver<Vec<u8>>>>)>> =
        (0..w).map(|_| Vec::new()).collect();
    // channel from i to j lives in slots[i][j].0 (sender) and
    // slots[j][i].1 (receiver)
    let mut receivers: Vec<Vec<Option<Mutex<Receiver<Vec<u8>>>>>> =
        (0..w).map(|_| (0..w).map(|_| None).collect()).collect();
    for i in 0..w {
        for j in 0..w {
            if i == j {
                slots[i].push((None, None));
                continue;
            }
            let (tx, rx) = mpsc::channel();
            slots[i].push((Some(tx), None));
            receivers[j][i] = Some(Mutex::new(rx));
        }
    }
    slots
        .into_iter()
        .zip(receivers)
        .enumerate()
        .map(|(rank, (row, recv_row))| InProcTransport {
            rank: rank as u32,
            world: world_size,
            timeout,
            senders: row.into_iter().map(|(tx, _)| tx).collect(),
            receivers: recv_row,
        })
        .collect()
}

impl Transport for InProcTransport {
    fn rank(&self) -> u32 {
        self.rank
    }

    fn world_size(&self) -> u32 {
        self.world
    }

    fn send(&self, to: u32, payload: &[u8]) -> Result<(), DdpError> {
        let tx = self.senders[to as usize]
            .as_ref()
            .ok_or_else(|| DdpError::TransportFailure(format!("no channel to rank {to}")))?;
        tx.send(payload.to_vec())
            .map_err(|_| DdpError::TransportFailure(format!("rank {to} disconnected")))
    }

    fn recv(&self, from: u32) -> Result<Vec<u8>, DdpError> {
        let rx = self.receivers[from as usize]
            .as_ref()
            .ok_or_else(|| DdpError::TransportFailure(format!("no channel from rank {from}")))?;
        let guard = rx.lock().unwrap();
        match guard.recv_timeout(self.timeout) {
            Ok(v) => Ok(v),
            Err(RecvTimeoutError::Timeout) => Err(DdpError::Timeout {
                waiting: self.rank,
                detail: format!("no message from rank {from} within {:?}", self.timeout),
            }),
            Err(RecvTimeoutError::Disconnected) => Err(DdpError::TransportFailure(format!(
                "rank {from} disconnected"
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// TCP transport

const FRAME_VERSION: u8 = 1;
const FRAME_HELLO: u8 = 1;
const FRAME_ADDRBOOK: u8 = 2;
const FRAME_DATA: u8 = 3;

fn write_frame(
    stream: &TcpStream,
    kind: u8,
    from: u32,
    seq: u64,
    payload: &[u8],
) -> Result<(), DdpError> {
    let mut buf = Vec::with_capacity(payload.len() + 22);
    wire::put_u8(&mut buf, FRAME_VERSION);
    wire::put_u8(&mut buf, kind);
    wire::put_u32(&mut buf, from);
    wire::put_u64(&mut buf, seq);
    wire::put_u32(&mut buf, payload.len() as u32);
    buf.extend_from_slice(payload);
    wire::put_u32(&mut buf, crc32fast::hash(payload));
    use std::io::Write;
    (&mut &*stream)
        .write_all(&buf)
        .map_err(|e| DdpError::TransportFailure(format!("send failed: {e}")))
}

fn read_frame(stream: &TcpStream, waiting: u32) -> Result<(u8, u32, u64, Vec<u8>), DdpError> {
    use std::io::Read;
    let read_exact = |buf: &mut [u8]| -> Result<(), DdpError> {
        (&mut &*stream).read_exact(buf).map_err(|e| {
            if matches!(
                e.kind(),
                std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
            ) {
                DdpError::Timeout {
                    waiting,
                    detail: "no frame within the read timeout".to_string(),
                }
            } else {
                DdpError::TransportFailure(format!("recv failed: {e}"))
            }
        })
    };
    let mut head = [0u8; 18];
    read_exact(&mut head)?;
    if head[0] != FRAME_VERSION {
        return Err(DdpError::TransportFailure(format!(
            "unsupported frame version {}",
            head[0]
        )));
    }
    let kind = head[1];
    let from = u32::from_le_bytes(head[2..6].try_into().unwrap());
    let seq = u64::from_le_bytes(head[6..14].try_into().unwrap());
    let len = u32::from_le_bytes(head[14..18].try_into().unwrap()) as usize;
    let mut payload = vec![0u8; len];
    read_exact(&mut payload)?;
    let mut crc = [0u8; 4];
    read_exact(&mut crc)?;
    if u32::from_le_bytes(crc) != crc32fast::hash(&payload) {
        return Err(DdpError::TransportFailure(
            "frame checksum mismatch".to_string(),
        ));
    }
    Ok((kind, from, seq, payload))
}

pub struct TcpTransport {
    rank: u32,
    world: u32,
    peers: Vec<Option<TcpStream>>,
    seq_out: Vec<AtomicU64>,
    seq_in: Vec<AtomicU64>,
}

impl TcpTransport {
    fn new(rank: u32, world: u32, peers: Vec<Option<TcpStream>>) -> Self {
        let seq = |_: usize| AtomicU64::new(0);
        TcpTransport {
            rank,
            world,
            seq_out: (0..world as usize).map(seq).collect(),
            seq_in: (0..world as usize).map(seq).collect(),
            peers,
        }
    }
}

impl Transport for TcpTransport {
    fn rank(&self) -> u32 {
        self.rank
    }

    fn world_size(&self) -> u32 {
        self.world
    }

    fn send(&self, to: u32, payload: &[u8]) -> Result<(), DdpError> {
        let stream = self.peers[to as usize]
            .as_ref()
            .ok_or_else(|| DdpError::TransportFailure(format!("no connection to rank {to}")))?;
        let seq = self.seq_out[to as usize].fetch_add(1, Ordering::Relaxed);
        write_frame(stream, FRAME_DATA, self.rank, seq, payload)
    }

    fn recv(&self, from: u32) -> Result<Vec<u8>, DdpError> {
        let stream = self.peers[from as usize]
            .as_ref()
            .ok_or_else(|| DdpError::TransportFailure(format!("no connection from rank {from}")))?;
        let (kind, sender, seq, payload) = read_frame(stream, self.rank)?;
        if kind != FRAME_DATA || sender != from {
            return Err(DdpError::TransportFailure(format!(
                "unexpected frame kind {kind} from rank {sender}"
            )));
        }
        let expect = self.seq_in[from as usize].fetch_add(1, Ordering::Relaxed);
        if seq != expect {
            return Err(DdpError::TransportFailure(format!(
                "out-of-order frame from rank {from}: seq {seq}, expected {expect}"
            )));
        }
        Ok(payload)
    }
}

/// Rendezvous listener for rank 0. Two-phase so callers can learn the bound
/// address before the other ranks join.
pub struct TcpHost {
    listener: TcpListener,
    world: u32,
    timeout: Duration,
}

impl TcpHost {
    pub fn bind(addr: impl ToSocketAddrs, world_size: u32, timeout: Duration) -> Result<Self, DdpError> {
        if world_size == 0 {
            return Err(DdpError::InvalidWorld(0));
        }
        Ok(TcpHost {
            listener: TcpListener::bind(addr)?,
            world: world_size,
            timeout,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, DdpError> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts every other rank, distributes the address book, and becomes
    /// rank 0's transport.
    pub fn accept(self) -> Result<TcpTransport, DdpError> {
        let w = self.world as usize;
        let mut peers: Vec<Option<TcpStream>> = (0..w).map(|_| None).collect();
        let mut addrs: Vec<Option<String>> = (0..w).map(|_| None).collect();
        for _ in 1..w {
            let (stream, _) = self.listener.accept()?;
            stream.set_nodelay(true).ok();
            stream.set_read_timeout(Some(self.timeout))?;
            let (kind, from, _, payload) = read_frame(&stream, 0)?;
            if kind != FRAME_HELLO {
                return Err(DdpError::TransportFailure(format!(
                    "expected hello, got frame kind {kind}"
                )));
            }
            let mut c = Cursor::new(&payload);
            let addr = c.get_short_str()?;
            if from == 0 || from as usize >= w || peers[from as usize].is_some() {
                return Err(DdpError::TransportFailure(format!(
                    "bad or duplicate hello from rank {from}"
                )));
            }
            addrs[from as usize] = Some(addr);
            peers[from as usize] = Some(stream);
        }
        // address book: rank u32 + addr string, for ranks 1..w
        let mut book = Vec::new();
        for r in 1..w {
            wire::put_u32(&mut book, r as u32);
            wire::put_short_str(&mut book, addrs[r].as_ref().unwrap());
        }
        for r in 1..w {
            write_frame(peers[r].as_ref().unwrap(), FRAME_ADDRBOOK, 0, 0, &book)?;
        }
        Ok(TcpTransport::new(0, self.world, peers))
    }
}

/// Joins a rendezvous as a nonzero rank and builds the full mesh: each rank
/// listens for connections from higher ranks and dials lower ones.
pub fn tcp_join(
    rendezvous: impl ToSocketAddrs,
    rank: u32,
    world_size: u32,
    timeout: Duration,
) -> Result<TcpTransport, DdpError> {
    if rank == 0 || rank >= world_size {
        return Err(DdpError::TransportFailure(format!(
            "rank {rank} cannot join a world of {world_size} as a client"
        )));
    }
    let w = world_size as usize;
    let listener = TcpListener::bind(("0.0.0.0", 0))?;

    let root = TcpStream::connect(rendezvous)?;
    root.set_nodelay(true).ok();
    root.set_read_timeout(Some(timeout))?;
    let my_addr = format!(
        "{}:{}",
        root.local_addr()?.ip(),
        listener.local_addr()?.port()
    );
    let mut hello = Vec::new();
    wire::put_short_str(&mut hello, &my_addr);
    write_frame(&root, FRAME_HELLO, rank, 0, &hello)?;

    let (kind, _, _, book) = read_frame(&root, rank)?;
    if kind != FRAME_ADDRBOOK {
        return Err(DdpError::TransportFailure(format!(
            "expected address book, got frame kind {kind}"
        )));
    }
    let mut addrs: Vec<Option<String>> = (0..w).map(|_| None).collect();
    let mut c = Cursor::new(&book);
    for _ in 1..w {
        let r = c.get_u32()? as usize;
        let addr = c.get_short_str()?;
        if r == 0 || r >= w {
            return Err(DdpError::TransportFailure(format!(
                "address book lists bad rank {r}"
            )));
        }
        addrs[r] = Some(addr);
    }

    let mut peers: Vec<Option<TcpStream>> = (0..w).map(|_| None).collect();
    peers[0] = Some(root);
    // dial lower nonzero ranks
    for r in 1..rank as usize {
        let addr = addrs[r].as_ref().unwrap();
        let stream = TcpStream::connect(addr.as_str())?;
        stream.set_nodelay(true).ok();
        stream.set_read_timeout(Some(timeout))?;
        write_frame(&stream, FRAME_HELLO, rank, 0, &[])?;
        peers[r] = Some(stream);
    }
    // accept higher ranks
    for _ in rank as usize + 1..w {
        let (stream, _) = listener.accept()?;
        stream.set_nodelay(true).ok();
        stream.set_read_timeout(Some(timeout))?;
        let (kind, from, _, _) = read_frame(&stream, rank)?;
        if kind != FRAME_HELLO || from as usize <= rank as usize || from as usize >= w {
            return Err(DdpError::TransportFailure(format!(
                "unexpected peer hello from rank {from}"
            )));
        }
        if peers[from as usize].is_some() {
            return Err(DdpError::TransportFailure(format!(
                "duplicate connection from rank {from}"
            )));
        }
        peers[from as usize] = Some(stream);
    }
    Ok(TcpTransport::new(rank, world_size, peers))
}

// ---------------------------------------------------------------------------
// Collectives

/// Reduction schedule for [`allreduce_mean`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceAlgo {
    /// Gather to rank 0, accumulate in ascending rank order, broadcast.
    /// The deterministic reference path.
    RankAscending,
    /// Ring reduce-scatter + allgather; the default. Also deterministic
    /// (fixed per-chunk reduction path), but with a different summation
    /// order than rank-ascending.
    Ring,
}

const PAYLOAD_DATA: u8 = 0;
const PAYLOAD_ABORT: u8 = 1;

fn encode_values(vals: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + vals.len() * 8);
    wire::put_u8(&mut out, PAYLOAD_DATA);
    wire::put_u64(&mut out, vals.len() as u64);
    for v in vals {
        wire::put_f64(&mut out, *v);
    }
    out
}

fn encode_abort(rank: u32, detail: &str) -> Vec<u8> {
    let mut out = Vec::new();
    wire::put_u8(&mut out, PAYLOAD_ABORT);
    wire::put_u32(&mut out, rank);
    wire::put_short_str(&mut out, detail);
    out
}

fn decode_values(payload: &[u8], expected: usize) -> Result<Vec<f64>, DdpError> {
    let mut c = Cursor::new(payload);
    match c.get_u8()? {
        PAYLOAD_DATA => {}
        PAYLOAD_ABORT => {
            let rank = c.get_u32()?;
            let detail = c.get_short_str()?;
            return Err(DdpError::RankFailed { rank, detail });
        }
        other => {
            return Err(DdpError::TransportFailure(format!(
                "unknown payload tag {other}"
            )))
        }
    }
    let n = c.get_u64()? as usize;
    if n != expected {
        return Err(DdpError::ShapeMismatch {
            expected,
            found: n,
        });
    }
    let mut vals = Vec::with_capacity(n);
    for _ in 0..n {
        vals.push(c.get_f64()?);
    }
    Ok(vals)
}

/// Overlap one outgoing transfer with one blocking receive, so ring steps
/// cannot interlock on full socket buffers.
fn exchange<Tr: Transport>(
    tr: &Tr,
    to: u32,
    payload: &[u8],
    from: u32,
) -> Result<Vec<u8>, DdpError> {
    std::thread::scope(|s| {
        let sender = s.spawn(|| tr.send(to, payload));
        let received = tr.recv(from);
        let sent = sender
            .join()
            .unwrap_or_else(|_| Err(DdpError::TransportFailure("send thread panicked".into())));
        sent.and(received)
    })
}

fn chunk_bounds(n: usize, w: usize) -> Vec<(usize, usize)> {
    let base = n / w;
    let rem = n % w;
    let mut bounds = Vec::with_capacity(w);
    let mut start = 0;
    for c in 0..w {
        let len = base + usize::from(c < rem);
        bounds.push((start, start + len));
        start += len;
    }
    bounds
}

fn rank_ascending_allreduce<Tr: Transport>(tr: &Tr, acc: &mut [f64]) -> Result<(), DdpError> {
    let w = tr.world_size();
    let rank = tr.rank();
    if rank == 0 {
        for r in 1..w {
            let payload = tr.recv(r)?;
            match decode_values(&payload, acc.len()) {
                Ok(vals) => {
                    for (a, v) in acc.iter_mut().zip(vals) {
                        *a += v;
                    }
                }
                Err(e) => {
                    // fail-stop: tell everyone before giving up
                    let abort = encode_abort(0, &e.to_string());
                    for peer in 1..w {
                        let _ = tr.send(peer, &abort);
                    }
                    return Err(e);
                }
            }
        }
        for a in acc.iter_mut() {
            *a /= f64::from(w);
        }
        let result = encode_values(acc);
        for r in 1..w {
            tr.send(r, &result)?;
        }
        Ok(())
    } else {
        tr.send(0, &encode_values(acc))?;
        let payload = tr.recv(0)?;
        let vals = decode_values(&payload, acc.len())?;
        acc.copy_from_slice(&vals);
        Ok(())
    }
}

fn ring_allreduce<Tr: Transport>(tr: &Tr, acc: &mut [f64]) -> Result<(), DdpError> {
    let w = tr.world_size() as usize;
    let rank = tr.rank() as usize;
    let next = ((rank + 1) % w) as u32;
    let prev = ((rank + w - 1) % w) as u32;
    let bounds = chunk_bounds(acc.len(), w);

    // reduce-scatter: after w-1 steps rank r owns the fully reduced chunk
    // (r + 1) mod w
    for step in 0..w - 1 {
        let send_c = (rank + w - step) % w;
        let recv_c = (rank + w - step - 1) % w;
        let (lo, hi) = bounds[send_c];
        let payload = encode_values(&acc[lo..hi]);
        let (rlo, rhi) = bounds[recv_c];
        let incoming = exchange(tr, next, &payload, prev)?;
        let vals = decode_values(&incoming, rhi - rlo)?;
        for (a, v) in acc[rlo..rhi].iter_mut().zip(vals) {
            *a += v;
        }
    }

    let owned = (rank + 1) % w;
    let (olo, ohi) = bounds[owned];
    for a in acc[olo..ohi].iter_mut() {
        *a /= w as f64;
    }

    // allgather the finished chunks around the ring
    for step in 0..w - 1 {
        let send_c = (rank + 1 + w - step) % w;
        let recv_c = (rank + w - step) % w;
        let (lo, hi) = bounds[send_c];
        let payload = encode_values(&acc[lo..hi]);
        let (rlo, rhi) = bounds[recv_c];
        let incoming = exchange(tr, next, &payload, prev)?;
        let vals = decode_values(&incoming, rhi - rlo)?;
        acc[rlo..rhi].copy_from_slice(&vals);
    }
    Ok(())
}

/// Leaves every rank holding the elementwise mean of all contributions.
/// Values travel as f64 regardless of the model precision.
pub fn allreduce_mean<T: Scalar, Tr: Transport>(
    tr: &Tr,
    data: &mut [T],
    algo: ReduceAlgo,
) -> Result<(), DdpError> {
    if tr.world_size() <= 1 {
        return Ok(());
    }
    let mut acc: Vec<f64> = data.iter().map(|v| v.as_f64()).collect();
    match algo {
        ReduceAlgo::RankAscending => rank_ascending_allreduce(tr, &mut acc)?,
        ReduceAlgo::Ring => ring_allreduce(tr, &mut acc)?,
    }
    for (d, a) in data.iter_mut().zip(acc) {
        *d = T::from_f64(a);
    }
    Ok(())
}

/// Replaces `data` on every rank with root's bytes. Receivers acknowledge,
/// so an absent worker surfaces as a timeout on the root.
pub fn broadcast_bytes<Tr: Transport>(
    tr: &Tr,
    root: u32,
    data: &mut Vec<u8>,
) -> Result<(), DdpError> {
    let w = tr.world_size();
    if w <= 1 {
        return Ok(());
    }
    if tr.rank() == root {
        for r in 0..w {
            if r != root {
                tr.send(r, data)?;
            }
        }
        for r in 0..w {
            if r != root {
                tr.recv(r)?;
            }
        }
    } else {
        *data = tr.recv(root)?;
        tr.send(root, &[])?;
    }
    Ok(())
}

/// After this call all ranks hold root's parameters bit-for-bit.
pub fn broadcast_params<T: Scalar, Tr: Transport>(
    tr: &Tr,
    root: u32,
    state: &mut ModelState<T>,
) -> Result<(), DdpError> {
    if tr.world_size() <= 1 {
        return Ok(());
    }
    let flat = state.params.flatten();
    let mut bytes = encode_values(&flat.iter().map(|v| v.as_f64()).collect::<Vec<_>>());
    broadcast_bytes(tr, root, &mut bytes)?;
    if tr.rank() != root {
        let vals = decode_values(&bytes, flat.len())?;
        let typed: Vec<T> = vals.into_iter().map(T::from_f64).collect();
        state.params.unflatten_from(&typed);
    }
    Ok(())
}

pub fn broadcast_f64<Tr: Transport>(tr: &Tr, root: u32, value: &mut f64) -> Result<(), DdpError> {
    let mut bytes = value.to_le_bytes().to_vec();
    broadcast_bytes(tr, root, &mut bytes)?;
    if bytes.len() != 8 {
        return Err(DdpError::TransportFailure(
            "bad scalar broadcast payload".to_string(),
        ));
    }
    *value = f64::from_le_bytes(bytes.try_into().unwrap());
    Ok(())
}

// ---------------------------------------------------------------------------
// Training

/// Per-epoch wall-clock decomposition, seconds per phase.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimings {
    pub dataload: f64,
    pub forward: f64,
    pub backward: f64,
    pub optimizer: f64,
    pub gradient_aggregation: f64,
    pub total: f64,
}

impl PhaseTimings {
    pub fn phase_sum(&self) -> f64 {
        self.dataload + self.forward + self.backward + self.optimizer + self.gradient_aggregation
    }
}

/// One synchronized optimizer step: local forward/backward, gradient
/// allreduce, AdamW. Phase durations accumulate into `timings`.
pub fn train_step<T: Scalar, Tr: Transport>(
    tr: &Tr,
    state: &mut ModelState<T>,
    batch: &Batch,
    hyper: &Hyper,
    algo: ReduceAlgo,
    timings: &mut PhaseTimings,
) -> Result<f64, DdpError> {
    let t0 = Instant::now();
    let typed = TypedBatch::<T>::from_batch(batch);
    let tape = forward(&state.params, &state.config, state.delta, &typed)?;
    let loss = mse_loss(tape.predictions(), &typed.y)?.as_f64();
    timings.forward += t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    state.grads = backward(&state.params, &state.config, state.delta, &typed, &tape)?;
    timings.backward += t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let mut flat = state.grads.flatten();
    allreduce_mean(tr, &mut flat, algo)?;
    state.grads.unflatten_from(&flat);
    timings.gradient_aggregation += t2.elapsed().as_secs_f64();

    let t3 = Instant::now();
    adamw_step(state, hyper);
    timings.optimizer += t3.elapsed().as_secs_f64();
    Ok(loss)
}

/// Everything a training run needs beyond the dataset itself.
#[derive(Clone, Debug)]
pub struct TrainSpec {
    pub config: ModelConfig,
    pub hyper: Hyper,
    pub seed: u64,
    pub algo: ReduceAlgo,
    pub prefetch_depth: usize,
    pub eval_batch_size: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl TrainSpec {
    pub fn new(config: ModelConfig, hyper: Hyper, seed: u64) -> Self {
        TrainSpec {
            config,
            hyper,
            seed,
            algo: ReduceAlgo::Ring,
            prefetch_depth: 2,
            eval_batch_size: 256,
            checkpoint_dir: None,
        }
    }
}

/// Rank-0 metrics for one epoch. `train_loss` is the mean of rank 0's local
/// batch losses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: f64,
    pub val_mae: f64,
}

/// Final-model evaluations over each split, computed on rank 0.
#[derive(Clone, Debug)]
pub struct FinalEvals {
    pub train: Evaluation,
    pub val: Evaluation,
    pub test: Evaluation,
}

/// What one rank hands back after `run_training_rank`.
#[derive(Debug)]
pub struct RankOutput<T> {
    pub rank: u32,
    pub state: ModelState<T>,
    pub timings: Vec<PhaseTimings>,
    pub history: Vec<EpochMetrics>,
    pub evals: Option<FinalEvals>,
}

/// The whole job's result, assembled from rank 0.
#[derive(Debug)]
pub struct RunOutput<T> {
    pub state: ModelState<T>,
    /// Indexed `[rank][epoch]`.
    pub timings: Vec<Vec<PhaseTimings>>,
    pub history: Vec<EpochMetrics>,
    pub evals: FinalEvals,
    /// Samples consumed per epoch across all ranks (drop-last sharding).
    pub samples_per_epoch: u64,
}

/// SPMD worker body, shared by the in-process and TCP paths. Rank 0
/// computes the degree statistic over the full training list and broadcasts
/// it; every rank then initializes identically, trains on its shard, and
/// rank 0 validates after each epoch and writes checkpoints.
pub fn run_training_rank<T: Scalar, Tr: Transport>(
    tr: &Tr,
    source: &Arc<dyn DataSource>,
    splits: &Splits,
    spec: &TrainSpec,
) -> Result<RankOutput<T>, DdpError> {
    let rank = tr.rank();
    let world = tr.world_size();
    spec.config.validate()?;
    spec.hyper.validate()?;

    let mut delta = if rank == 0 {
        let mut samples = Vec::with_capacity(splits.train.len());
        for &id in &splits.train {
            samples.push(source.fetch(id)?);
        }
        degree_stat(samples.iter())
    } else {
        0.0
    };
    broadcast_f64(tr, 0, &mut delta)?;

    let mut state = init_params::<T>(&spec.config, spec.seed, delta)?;
    broadcast_params(tr, 0, &mut state)?;

    let data_seed = spec.seed ^ DATA_SEED_SALT;
    let mut timings = Vec::with_capacity(spec.hyper.max_epochs);
    let mut history = Vec::new();

    for epoch in 0..spec.hyper.max_epochs {
        let mut t = PhaseTimings::default();
        let epoch_start = Instant::now();
        let ids = shard_indices(&splits.train, rank, world, data_seed, epoch as u64);
        let mut loader = make_loader(
            Arc::clone(source),
            &ids,
            spec.hyper.local_batch_size,
            spec.prefetch_depth,
        );
        let mut loss_sum = 0.0;
        let mut steps = 0u64;
        loop {
            let t0 = Instant::now();
            let item = loader.next();
            t.dataload += t0.elapsed().as_secs_f64();
            let Some(batch) = item else { break };
            let batch = batch?;
            loss_sum += train_step(tr, &mut state, &batch, &spec.hyper, spec.algo, &mut t)?;
            steps += 1;
        }
        t.total = epoch_start.elapsed().as_secs_f64();
        timings.push(t);

        if rank == 0 {
            let val = evaluate(
                &state,
                eval_batches(Arc::clone(source), &splits.val, spec.eval_batch_size),
            )?;
            history.push(EpochMetrics {
                epoch,
                train_loss: if steps > 0 { loss_sum / steps as f64 } else { 0.0 },
                val_mse: val.mse,
                val_mae: val.mae,
            });
            if let Some(dir) = &spec.checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                save_checkpoint(&dir.join(format!("epoch_{epoch:03}.ckpt")), &state)?;
            }
        }
    }

    let evals = if rank == 0 {
        if let Some(dir) = &spec.checkpoint_dir {
            save_checkpoint(&dir.join("final.ckpt"), &state)?;
        }
        let eval_split = |ids: &[u64]| {
            evaluate(
                &state,
                eval_batches(Arc::clone(source), ids, spec.eval_batch_size),
            )
        };
        Some(FinalEvals {
            train: eval_split(&splits.train)?,
            val: eval_split(&splits.val)?,
            test: eval_split(&splits.test)?,
        })
    } else {
        None
    };

    Ok(RankOutput {
        rank,
        state,
        timings,
        history,
        evals,
    })
}

/// Runs a full job with `world_size` in-process workers and assembles rank
/// 0's results. Any rank failure aborts the job and is reported with
/// per-rank diagnostics.
pub fn run_training<T: Scalar>(
    source: &Arc<dyn DataSource>,
    splits: &Splits,
    spec: &TrainSpec,
    world_size: u32,
    timeout: Duration,
) -> Result<RunOutput<T>, DdpError> {
    if world_size == 0 {
        return Err(DdpError::InvalidWorld(0));
    }
    let transports = in_proc_mesh(world_size, timeout);
    let mut results: Vec<Option<Result<RankOutput<T>, DdpError>>> =
        (0..world_size).map(|_| None).collect();

    std::thread::scope(|s| {
        let handles: Vec<_> = transports
            .into_iter()
            .map(|tr| {
                let source = Arc::clone(source);
                s.spawn(move || run_training_rank::<T, _>(&tr, &source, splits, spec))
            })
            .collect();
        for (r, h) in handles.into_iter().enumerate() {
            results[r] = Some(h.join().unwrap_or_else(|_| {
                Err(DdpError::RankFailed {
                    rank: r as u32,
                    detail: "worker thread panicked".to_string(),
                })
            }));
        }
    });

    let mut failures = Vec::new();
    let mut outputs = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res.expect("every rank joined") {
            Ok(out) => outputs.push(out),
            Err(e) => failures.push((r as u32, e.to_string())),
        }
    }
    if let Some((rank, _)) = failures.first() {
        let detail = failures
            .iter()
            .map(|(r, e)| format!("rank {r}: {e}"))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(DdpError::RankFailed { rank: *rank, detail });
    }

    outputs.sort_by_key(|o| o.rank);
    let timings = outputs.iter().map(|o| o.timings.clone()).collect();
    let per_rank = (splits.train.len() as u64 / u64::from(world_size))
        / spec.hyper.local_batch_size as u64
        * spec.hyper.local_batch_size as u64;
    let mut rank0 = outputs.remove(0);
    Ok(RunOutput {
        state: rank0.state,
        timings,
        history: std::mem::take(&mut rank0.history),
        evals: rank0.evals.expect("rank 0 evaluates"),
        samples_per_epoch: per_rank * u64::from(world_size),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{self, CorpusSpec, Style, TargetKind};
    use crate::dataload::MemorySource;
    use crate::gcnn::{forward_backward, Aggregator, Scaler};
    use crate::graphenc::{encode_graph, FeatureVocab, GraphSample};
    use crate::smiles::{expand_hydrogens, parse_smiles};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TICK: Duration = Duration::from_secs(20);

    fn spawn_ranks<F, R>(world: u32, timeout: Duration, f: F) -> Vec<R>
    where
        F: Fn(InProcTransport) -> R + Sync,
        R: Send,
    {
        let transports = in_proc_mesh(world, timeout);
        std::thread::scope(|s| {
            let handles: Vec<_> = transports
                .into_iter()
                .map(|tr| s.spawn(|| f(tr)))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        })
    }

    fn alkane_source(count: usize, seed: u64) -> (Arc<dyn DataSource>, usize, usize) {
        let records = corpus::generate(&CorpusSpec {
            count,
            seed,
            style: Style::Alkane {
                min_heavy: 3,
                max_heavy: 8,
            },
            target: TargetKind::ScaledHeavyCount,
        });
        let mols: Vec<_> = records
            .iter()
            .map(|r| expand_hydrogens(parse_smiles(&r.smiles).unwrap()))
            .collect();
        let vocab = FeatureVocab::collect_from_molecules(&mols).unwrap();
        let node_features = vocab.node_feature_count();
        let samples: Vec<GraphSample> = mols
            .iter()
            .zip(&records)
            .enumerate()
            .map(|(i, (m, r))| encode_graph(m, &vocab, r.target_ev, i as u64).unwrap())
            .collect();
        (Arc::new(MemorySource::new(samples, vocab)), node_features, count)
    }

    fn small_config(node_features: usize) -> ModelConfig {
        ModelConfig {
            num_conv_layers: 2,
            hidden_width: 8,
            fc_layers: 2,
            aggregators: Aggregator::ALL.to_vec(),
            scalers: Scaler::ALL.to_vec(),
            node_features,
            edge_features: 4,
            use_edge_features: true,
        }
    }

    #[test]
    fn allreduce_two_rank_example() {
        for algo in [ReduceAlgo::RankAscending, ReduceAlgo::Ring] {
            let results = spawn_ranks(2, TICK, |tr| {
                let mut data = if tr.rank() == 0 {
                    vec![1.0f64, 2.0]
                } else {
                    vec![3.0, 4.0]
                };
                allreduce_mean(&tr, &mut data, algo).unwrap();
                data
            });
            for r in results {
                assert_eq!(r, vec![2.0, 3.0], "{algo:?}");
            }
        }
    }

    #[test]
    fn world_one_collectives_are_identity() {
        let mut mesh = in_proc_mesh(1, TICK);
        let tr = mesh.remove(0);
        let mut data = vec![5.0f64, -1.0, 0.25];
        allreduce_mean(&tr, &mut data, ReduceAlgo::Ring).unwrap();
        assert_eq!(data, vec![5.0, -1.0, 0.25]);
        let mut bytes = vec![1u8, 2, 3];
        broadcast_bytes(&tr, 0, &mut bytes).unwrap();
        assert_eq!(bytes, vec![1, 2, 3]);
    }

    #[test]
    fn allreduce_matches_rank_ascending_oracle() {
        let world = 4u32;
        let n = 1001usize; // not divisible by the world size
        let inputs: Vec<Vec<f64>> = (0..world)
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + u64::from(r));
                (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()
            })
            .collect();

        // sequential oracle: ((g0 + g1) + g2 ...) / W in rank order
        let mut oracle = inputs[0].clone();
        for r in 1..world as usize {
            for (a, v) in oracle.iter_mut().zip(&inputs[r]) {
                *a += *v;
            }
        }
        for a in oracle.iter_mut() {
            *a /= f64::from(world);
        }

        let run = |algo: ReduceAlgo| {
            let inputs = inputs.clone();
            spawn_ranks(world, TICK, move |tr| {
                let mut data = inputs[tr.rank() as usize].clone();
                allreduce_mean(&tr, &mut data, algo).unwrap();
                data
            })
        };

        let asc = run(ReduceAlgo::RankAscending);
        for r in &asc {
            assert_eq!(r, &oracle, "rank-ascending must equal the oracle exactly");
        }
        let ring = run(ReduceAlgo::Ring);
        for r in &ring {
            assert_eq!(r, &ring[0], "ring results must agree across ranks");
            for (a, b) in r.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn allreduce_shape_mismatch_is_detected() {
        let results = spawn_ranks(2, Duration::from_secs(2), |tr| {
            let mut data = if tr.rank() == 0 {
                vec![1.0f64, 2.0, 3.0]
            } else {
                vec![1.0f64, 2.0, 3.0, 4.0]
            };
            allreduce_mean(&tr, &mut data, ReduceAlgo::RankAscending)
        });
        assert!(results.iter().all(Result::is_err), "no rank may succeed");
        assert!(
            results.iter().any(|r| matches!(
                r,
                Err(DdpError::ShapeMismatch {
                    expected: 3,
                    found: 4
                })
            )),
            "the root must report the mismatch"
        );
    }

    #[test]
    fn broadcast_params_syncs_every_rank() {
        let cfg = small_config(7);
        let reference = init_params::<f64>(&cfg, 50, 1.0).unwrap().params.flatten();
        let flats = spawn_ranks(3, TICK, |tr| {
            // each rank starts from a different seed; only root's survive
            let seed = 50 + u64::from(tr.rank());
            let mut state = init_params::<f64>(&cfg, seed, 1.0).unwrap();
            broadcast_params(&tr, 0, &mut state).unwrap();
            state.params.flatten()
        });
        for f in flats {
            assert_eq!(f, reference);
        }
    }

    #[test]
    fn absent_worker_times_out() {
        let mut mesh = in_proc_mesh(2, Duration::from_millis(100));
        let rank0 = mesh.remove(0);
        let _rank1_alive_but_silent = mesh.remove(0);
        let mut data = vec![1.0f64];
        let err = allreduce_mean(&rank0, &mut data, ReduceAlgo::RankAscending).unwrap_err();
        assert!(matches!(err, DdpError::Timeout { waiting: 0, .. }), "{err}");

        let mut bytes = vec![0u8; 4];
        let err = broadcast_bytes(&rank0, 0, &mut bytes).unwrap_err();
        assert!(matches!(err, DdpError::Timeout { .. }), "{err}");
    }

    #[test]
    fn world_one_train_step_matches_plain_loop() {
        let (source, node_features, n) = alkane_source(64, 77);
        let cfg = small_config(node_features);
        let hyper = Hyper {
            local_batch_size: 16,
            ..Hyper::default()
        };
        let ids: Vec<u64> = (0..n as u64).collect();
        let delta = 0.9;

        let mut mesh = in_proc_mesh(1, TICK);
        let tr = mesh.remove(0);
        let mut ddp_state = init_params::<f64>(&cfg, 5, delta).unwrap();
        let mut plain_state = init_params::<f64>(&cfg, 5, delta).unwrap();
        let mut timings = PhaseTimings::default();

        for batch in make_loader(Arc::clone(&source), &ids, hyper.local_batch_size, 0) {
            let batch = batch.unwrap();
            train_step(&tr, &mut ddp_state, &batch, &hyper, ReduceAlgo::Ring, &mut timings)
                .unwrap();
            forward_backward(&mut plain_state, &batch).unwrap();
            adamw_step(&mut plain_state, &hyper);
        }
        assert_eq!(ddp_state.params.flatten(), plain_state.params.flatten());
        assert!(timings.forward > 0.0 && timings.backward > 0.0);
    }

    #[test]
    fn four_ranks_match_single_process_large_batch() {
        // 6400 train graphs: 50 steps of global batch 128, exactly one
        // epoch. The union of the four shards' step-k batches is the
        // single process's step-k batch.
        let (source, node_features, n) = alkane_source(6400, 2024);
        let cfg = small_config(node_features);
        let seed = 9u64;
        let steps = 50usize;
        let train: Vec<u64> = (0..n as u64).collect();

        let single = {
            let hyper = Hyper {
                local_batch_size: 128,
                ..Hyper::default()
            };
            let mut mesh = in_proc_mesh(1, TICK);
            let tr = mesh.remove(0);
            let mut state = init_params::<f64>(&cfg, seed, 1.0).unwrap();
            let ids = shard_indices(&train, 0, 1, seed, 0);
            let mut t = PhaseTimings::default();
            let mut count = 0;
            for batch in make_loader(Arc::clone(&source), &ids, 128, 0) {
                train_step(&tr, &mut state, &batch.unwrap(), &hyper, ReduceAlgo::Ring, &mut t)
                    .unwrap();
                count += 1;
            }
            assert_eq!(count, steps);
            state.params.flatten()
        };

        let world = 4u32;
        let hyper = Hyper {
            local_batch_size: 32,
            ..Hyper::default()
        };
        let flats = spawn_ranks(world, TICK, |tr| {
            let mut state = init_params::<f64>(&cfg, seed, 1.0).unwrap();
            let ids = shard_indices(&train, tr.rank(), world, seed, 0);
            let mut t = PhaseTimings::default();
            let mut count = 0;
            for batch in make_loader(Arc::clone(&source), &ids, 32, 0) {
                train_step(
                    &tr,
                    &mut state,
                    &batch.unwrap(),
                    &hyper,
                    ReduceAlgo::RankAscending,
                    &mut t,
                )
                .unwrap();
                count += 1;
            }
            assert_eq!(count, steps);
            state.params.flatten()
        });

        for f in &flats[1..] {
            assert_eq!(f, &flats[0], "ranks must stay bit-identical");
        }
        let mut worst = 0.0f64;
        for (a, b) in flats[0].iter().zip(&single) {
            let rel = (a - b).abs() / b.abs().max(1e-12);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-6, "max relative divergence {worst}");
    }

    #[test]
    fn run_training_emits_history_timings_and_checkpoints() {
        let (source, node_features, n) = alkane_source(400, 31);
        let cfg = small_config(node_features);
        let splits = Splits {
            train: (0..(n as u64 - 60)).collect(),
            val: ((n as u64 - 60)..(n as u64 - 30)).collect(),
            test: ((n as u64 - 30)..n as u64).collect(),
        };
        let tmp = tempfile::tempdir().unwrap();
        let mut spec = TrainSpec::new(
            cfg,
            Hyper {
                local_batch_size: 32,
                max_epochs: 3,
                ..Hyper::default()
            },
            12,
        );
        spec.prefetch_depth = 0;
        spec.checkpoint_dir = Some(tmp.path().to_path_buf());

        let out = run_training::<f64>(&source, &splits, &spec, 2, TICK).unwrap();
        assert_eq!(out.history.len(), 3);
        assert_eq!(out.timings.len(), 2);
        for rank_timings in &out.timings {
            assert_eq!(rank_timings.len(), 3);
            for t in rank_timings {
                assert!(t.total + 1e-6 >= t.phase_sum(), "total {t:?}");
            }
        }
        assert_eq!(out.samples_per_epoch, 2 * (340 / 2 / 32) * 32);
        for e in 0..3 {
            assert!(tmp.path().join(format!("epoch_{e:03}.ckpt")).exists());
        }
        let final_state =
            crate::gcnn::load_checkpoint::<f64>(&tmp.path().join("final.ckpt")).unwrap();
        assert_eq!(final_state.params, out.state.params);
        assert_eq!(out.evals.val.count, 30);
        assert_eq!(out.evals.test.count, 30);

        // deterministic rerun
        let again = run_training::<f64>(&source, &splits, &spec, 2, TICK).unwrap();
        assert_eq!(again.history, out.history);
        assert_eq!(again.state.params, out.state.params);
    }

    #[test]
    fn rank_failure_aborts_whole_job() {
        struct Poisoned {
            inner: Arc<dyn DataSource>,
            poison: u64,
        }
        impl DataSource for Poisoned {
            fn len(&self) -> u64 {
                self.inner.len()
            }
            fn vocab(&self) -> &FeatureVocab {
                self.inner.vocab()
            }
            fn fetch(&self, id: u64) -> Result<GraphSample, LoadError> {
                if id == self.poison {
                    return Err(LoadError::SourceUnreadable {
                        key: format!("graph {id}"),
                        detail: "injected fault".to_string(),
                    });
                }
                self.inner.fetch(id)
            }
        }

        let (inner, node_features, n) = alkane_source(200, 8);
        let source: Arc<dyn DataSource> = Arc::new(Poisoned { inner, poison: 17 });
        let splits = Splits {
            train: (0..(n as u64 - 20)).collect(),
            val: ((n as u64 - 20)..(n as u64 - 10)).collect(),
            test: ((n as u64 - 10)..n as u64).collect(),
        };
        let spec = TrainSpec {
            prefetch_depth: 0,
            ..TrainSpec::new(
                small_config(node_features),
                Hyper {
                    local_batch_size: 16,
                    max_epochs: 1,
                    ..Hyper::default()
                },
                3,
            )
        };
        let err = run_training::<f64>(&source, &splits, &spec, 2, Duration::from_secs(2))
            .unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, DdpError::RankFailed { .. }), "{msg}");
        assert!(msg.contains("injected fault") || msg.contains("timed out"), "{msg}");
    }

    #[test]
    fn tcp_loopback_matches_in_proc() {
        let world = 3u32;
        let host = TcpHost::bind("127.0.0.1:0", world, TICK).unwrap();
        let addr = host.local_addr().unwrap();

        let results = std::thread::scope(|s| {
            let h0 = s.spawn(move || {
                let tr = host.accept().unwrap();
                let mut data = vec![3.0f64, 0.0, 9.0];
                allreduce_mean(&tr, &mut data, ReduceAlgo::Ring).unwrap();
                let mut b = vec![7u8; 3];
                broadcast_bytes(&tr, 0, &mut b).unwrap();
                (data, b)
            });
            let workers: Vec<_> = (1..world)
                .map(|rank| {
                    s.spawn(move || {
                        let tr = tcp_join(addr, rank, world, TICK).unwrap();
                        let mut data = vec![f64::from(rank) * 3.0, f64::from(rank), 0.0];
                        allreduce_mean(&tr, &mut data, ReduceAlgo::Ring).unwrap();
                        let mut b = Vec::new();
                        broadcast_bytes(&tr, 0, &mut b).unwrap();
                        (data, b)
                    })
                })
                .collect();
            let mut out = vec![h0.join().unwrap()];
            out.extend(workers.into_iter().map(|h| h.join().unwrap()));
            out
        });

        // mean of [3,0,9], [3,1,0], [6,2,0]
        for (data, bytes) in &results {
            assert_eq!(data, &vec![4.0, 1.0, 3.0]);
            assert_eq!(bytes, &vec![7u8; 3]);
        }
    }
}
