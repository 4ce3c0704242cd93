use std::collections::VecDeque;
use std::io::{BufRead, BufReader, ErrorKind, Read, Write};
use std::time::Duration;

use super::IlError;

/// A bidirectional line channel. Lines include their trailing newline.
pub trait Transport: Send {
    fn send(&mut self, line: &str) -> Result<(), IlError>;
    /// Next line from the peer; `Ok(None)` when the peer has closed.
    fn recv(&mut self, timeout: Option<Duration>) -> Result<Option<String>, IlError>;
}

/// The receiving side of a session: turns one incoming line into replies.
pub trait LineHandler: Send {
    fn handle_line(&mut self, line: &str) -> Vec<String>;
}

/// In-process transport: every sent line is handed straight to the handler.
pub struct Loopback<H> {
    handler: H,
    inbox: VecDeque<String>,
}

impl<H: LineHandler> Loopback<H> {
    pub fn new(handler: H) -> Self {
        Loopback {
            handler,
            inbox: VecDeque::new(),
        }
    }

    pub fn handler(&self) -> &H {
        &self.handler
    }

    pub fn into_handler(self) -> H {
        self.handler
    }
}

impl<H: LineHandler> Transport for Loopback<H> {
    fn send(&mut self, line: &str) -> Result<(), IlError> {
        self.inbox.extend(self.handler.handle_line(line));
        Ok(())
    }

    /// The handler answers synchronously, so an empty inbox means the peer
    /// will never answer: that is reported as a timeout straight away.
    fn recv(&mut self, timeout: Option<Duration>) -> Result<Option<String>, IlError> {
        match self.inbox.pop_front() {
            Some(line) => Ok(Some(line)),
            None => Err(IlError::Timeout(timeout.unwrap_or_default())),
        }
    }
}

/// Streams whose reads can time out (TCP and Unix sockets).
pub trait TimeoutStream: Read + Write + Send {
    fn set_timeout(&self, timeout: Option<Duration>) -> std::io::Result<()>;
}

impl TimeoutStream for std::net::TcpStream {
    fn set_timeout(&self, timeout: Option<Duration>) -> std::io::Result<()> {
        self.set_read_timeout(timeout)
    }
}

#[cfg(unix)]
impl TimeoutStream for std::os::unix::net::UnixStream {
    fn set_timeout(&self, timeout: Option<Duration>) -> std::io::Result<()> {
        self.set_read_timeout(timeout)
    }
}

/// Line transport over a socket, for running the control in another thread
/// or process.
pub struct StreamTransport<S: TimeoutStream> {
    reader: BufReader<S>,
    writer: S,
    partial: String,
}

impl<S: TimeoutStream> StreamTransport<S> {
    /// `reader` and `writer` are two handles on the same connection
    /// (see `try_clone`).
    pub fn new(reader: S, writer: S) -> Self {
        StreamTransport {
            reader: BufReader::new(reader),
            writer,
            partial: String::new(),
        }
    }
}

impl<S: TimeoutStream> Transport for StreamTransport<S> {
    fn send(&mut self, line: &str) -> Result<(), IlError> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Option<String>, IlError> {
        self.reader.get_ref().set_timeout(timeout)?;
        match self.reader.read_line(&mut self.partial) {
            Ok(0) if self.partial.is_empty() => Ok(None),
            Ok(_) if self.partial.ends_with('\n') => Ok(Some(std::mem::take(&mut self.partial))),
            // EOF in the middle of a line: hand over what arrived; the
            // decoder reports it as truncated.
            Ok(_) => Ok(Some(std::mem::take(&mut self.partial))),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                Err(IlError::Timeout(timeout.unwrap_or_default()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

/// Runs `handler` on every line arriving on `transport` until the peer
/// closes the connection.
pub fn serve(handler: &mut dyn LineHandler, transport: &mut dyn Transport) -> Result<(), IlError> {
    while let Some(line) = transport.recv(None)? {
        for reply in handler.handle_line(&line) {
            transport.send(&reply)?;
        }
        if super::decode(line.as_bytes()).is_ok_and(|m| m.kind() == "close") {
            break;
        }
    }
    Ok(())
}
