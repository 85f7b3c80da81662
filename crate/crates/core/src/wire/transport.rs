//! Reliable, ordered duplex byte streams for the two link endpoints.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::str::FromStr;
use std::sync::mpsc::{channel, Receiver, Sender};

use crate::error::{Error, Result};

/// Either end of an in-process duplex pipe.
pub struct InprocEnd {
    tx: Option<Sender<Vec<u8>>>,
    rx: Receiver<Vec<u8>>,
    pending: Vec<u8>,
    pos: usize,
}

/// Two connected in-process ends.
pub fn inproc_pair() -> (InprocEnd, InprocEnd) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    (
        InprocEnd { tx: Some(a_tx), rx: a_rx, pending: Vec::new(), pos: 0 },
        InprocEnd { tx: Some(b_tx), rx: b_rx, pending: Vec::new(), pos: 0 },
    )
}

impl InprocEnd {
    /// Closes the sending half; the peer then reads end of stream.
    pub fn shutdown(&mut self) {
        self.tx = None;
    }
}

impl Read for InprocEnd {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if buf.is_empty() {
            return Ok(0);
        }
        while self.pos == self.pending.len() {
            match self.rx.recv() {
                Ok(chunk) => {
                    self.pending = chunk;
                    self.pos = 0;
                }
                Err(_) => return Ok(0),
            }
        }
        let n = buf.len().min(self.pending.len() - self.pos);
        buf[..n].copy_from_slice(&self.pending[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

impl Write for InprocEnd {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let tx = self.tx.as_ref().ok_or_else(|| io::Error::new(io::ErrorKind::BrokenPipe, "shut down"))?;
        if !buf.is_empty() {
            tx.send(buf.to_vec()).map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "peer closed"))?;
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// A byte stream usable by an endpoint.
pub trait Duplex: Read + Write + Send {
    /// Signals end of stream to the peer.
    fn close(&mut self);
}

impl Duplex for InprocEnd {
    fn close(&mut self) {
        self.shutdown();
    }
}

impl Duplex for TcpStream {
    fn close(&mut self) {
        let _ = self.shutdown(std::net::Shutdown::Write);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    Inproc,
    /// Local stream socket; port 0 picks a free port.
    Socket(SocketAddr),
}

impl FromStr for TransportKind {
    type Err = Error;

    /// `inproc`, `socket` (loopback, any port) or `socket:<addr>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inproc" => Ok(TransportKind::Inproc),
            "socket" => Ok(TransportKind::Socket(SocketAddr::from(([127, 0, 0, 1], 0)))),
            _ => match s.strip_prefix("socket:") {
                Some(addr) => addr
                    .parse()
                    .map(TransportKind::Socket)
                    .map_err(|e| Error::Config(format!("bad socket address {addr:?}: {e}"))),
                None => Err(Error::Config(format!("unknown transport {s:?}"))),
            },
        }
    }
}

/// Connected (gNB end, UE end).
pub fn connect(kind: TransportKind) -> Result<(Box<dyn Duplex>, Box<dyn Duplex>)> {
    match kind {
        TransportKind::Inproc => {
            let (a, b) = inproc_pair();
            Ok((Box::new(a), Box::new(b)))
        }
        TransportKind::Socket(addr) => {
            let listener = TcpListener::bind(addr).map_err(|e| Error::Link(format!("bind {addr}: {e}")))?;
            let local = listener.local_addr()?;
            let ue = TcpStream::connect(local).map_err(|e| Error::Link(format!("connect {local}: {e}")))?;
            let (gnb, _) = listener.accept().map_err(|e| Error::Link(format!("accept: {e}")))?;
            gnb.set_nodelay(true)?;
            ue.set_nodelay(true)?;
            Ok((Box::new(gnb), Box::new(ue)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exchange(kind: TransportKind) {
        let (mut a, mut b) = connect(kind).unwrap();
        a.write_all(b"hello").unwrap();
        a.close();
        let mut got = Vec::new();
        b.read_to_end(&mut got).unwrap();
        assert_eq!(got, b"hello");
        b.write_all(b"back").unwrap();
        let mut buf = [0u8; 4];
        a.read_exact(&mut buf).unwrap();
        assert_eq!(&buf, b"back");
    }

    #[test]
    fn inproc_duplex() {
        exchange(TransportKind::Inproc);
    }

    #[test]
    fn socket_duplex() {
        exchange("socket".parse().unwrap());
    }

    #[test]
    fn parse_kinds() {
        assert_eq!("inproc".parse::<TransportKind>().unwrap(), TransportKind::Inproc);
        assert!("socket:127.0.0.1:0".parse::<TransportKind>().is_ok());
        assert!("carrier-pigeon".parse::<TransportKind>().is_err());
    }
}
