//! Denoiser hosted by another process, reached over the v1 wire protocol on
//! a child's stdin/stdout or on a stream socket.
//!
//! Reads and writes run on helper threads so that a stalled peer surfaces as
//! a timeout instead of blocking the sampler. One request is in flight at a
//! time; after any failure the connection is poisoned.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{Shutdown, TcpStream};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::Duration;

use super::protocol::{read_frame, Frame, ProtocolError};
use super::Denoiser;
use crate::degradation::Tensor;
use crate::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

pub struct ExternalDenoiser {
    requests: Option<Sender<Vec<u8>>>,
    responses: Receiver<Result<Frame, ProtocolError>>,
    timeout: Duration,
    child: Option<Child>,
    /// Shuts a socket down on drop; the reader thread holds its own handle.
    closer: Option<Box<dyn FnOnce() + Send>>,
    poisoned: bool,
    calls: u64,
}

impl ExternalDenoiser {
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        timeout: Duration,
    ) -> Self {
        let (req_tx, req_rx) = mpsc::channel::<Vec<u8>>();
        let (resp_tx, resp_rx) = mpsc::channel();

        let err_tx = resp_tx.clone();
        thread::spawn(move || {
            let mut writer = BufWriter::new(writer);
            for bytes in req_rx {
                if let Err(e) = writer.write_all(&bytes).and_then(|_| writer.flush()) {
                    let _ = err_tx.send(Err(ProtocolError::ProcessExited(format!("write failed: {e}"))));
                    break;
                }
            }
        });
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let msg = match read_frame(&mut reader) {
                    Ok(Some(frame)) => Ok(frame),
                    Ok(None) => Err(ProtocolError::ProcessExited("stream closed".into())),
                    Err(e) => Err(e),
                };
                let stop = msg.is_err();
                if resp_tx.send(msg).is_err() || stop {
                    break;
                }
            }
        });

        Self {
            requests: Some(req_tx),
            responses: resp_rx,
            timeout,
            child: None,
            closer: None,
            poisoned: false,
            calls: 0,
        }
    }

    /// Starts `command[0]` with the remaining arguments and talks to it over
    /// its stdin/stdout.
    pub fn spawn(command: &[String], timeout: Duration) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::config("denoiser.command", "empty command"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut this = Self::from_streams(stdout, stdin, timeout);
        this.child = Some(child);
        Ok(this)
    }

    /// Connects to `tcp:HOST:PORT`, `unix:PATH`, or a bare `HOST:PORT`.
    pub fn connect(address: &str, timeout: Duration) -> Result<Self> {
        #[cfg(unix)]
        if let Some(path) = address.strip_prefix("unix:") {
            let stream = std::os::unix::net::UnixStream::connect(path)?;
            return Self::from_unix_stream(stream, timeout);
        }
        let addr = address.strip_prefix("tcp:").unwrap_or(address);
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Self::from_tcp_stream(stream, timeout)
    }

    /// Talks over a connected socket and shuts it down when dropped.
    #[cfg(unix)]
    pub fn from_unix_stream(stream: std::os::unix::net::UnixStream, timeout: Duration) -> Result<Self> {
        let reader = stream.try_clone()?;
        let handle = stream.try_clone()?;
        let mut this = Self::from_streams(reader, stream, timeout);
        this.closer = Some(Box::new(move || {
            let _ = handle.shutdown(Shutdown::Both);
        }));
        Ok(this)
    }

    /// Talks over a connected socket and shuts it down when dropped.
    pub fn from_tcp_stream(stream: TcpStream, timeout: Duration) -> Result<Self> {
        let reader = stream.try_clone()?;
        let handle = stream.try_clone()?;
        let mut this = Self::from_streams(reader, stream, timeout);
        this.closer = Some(Box::new(move || {
            let _ = handle.shutdown(Shutdown::Both);
        }));
        Ok(this)
    }

    /// Requests served so far.
    pub fn calls(&self) -> u64 {
        self.calls
    }

    /// Sends one request frame and waits for the matching response.
    pub fn roundtrip(&mut self, request: &Frame) -> Result<Frame, ProtocolError> {
        if self.poisoned {
            return Err(ProtocolError::Poisoned);
        }
        let result = self.exchange(request);
        if result.is_err() {
            self.poisoned = true;
        }
        result
    }

    fn exchange(&mut self, request: &Frame) -> Result<Frame, ProtocolError> {
        let tx = self.requests.as_ref().ok_or(ProtocolError::Poisoned)?;
        tx.send(request.encode())
            .map_err(|_| ProtocolError::ProcessExited("writer closed".into()))?;
        self.calls += 1;
        let response = match self.responses.recv_timeout(self.timeout) {
            Ok(r) => r?,
            Err(RecvTimeoutError::Timeout) => return Err(ProtocolError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                return Err(ProtocolError::ProcessExited("reader closed".into()))
            }
        };
        if response.dims != request.dims {
            return Err(ProtocolError::ShapeMismatch {
                sent: request.dims.clone(),
                received: response.dims,
            });
        }
        if response.payload.iter().any(|v| !v.is_finite()) {
            return Err(ProtocolError::NonFinite);
        }
        Ok(response)
    }
}

impl Denoiser for ExternalDenoiser {
    fn denoise(&mut self, x: &Tensor, sigma: f64) -> Result<Tensor> {
        let response = self
            .roundtrip(&Frame::from_tensor(x, sigma))
            .map_err(|source| Error::Protocol { step: 0, source })?;
        response.to_tensor().ok_or_else(|| Error::Protocol {
            step: 0,
            source: ProtocolError::ShapeMismatch {
                sent: Frame::from_tensor(x, sigma).dims,
                received: response.dims.clone(),
            },
        })
    }
}

impl Drop for ExternalDenoiser {
    fn drop(&mut self) {
        // Closing the request channel closes the child's stdin.
        self.requests.take();
        if let Some(close) = self.closer.take() {
            close();
        }
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
