//! Newline-delimited JSON transport to an external refiner, and the
//! matching server loop.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};

use super::{RefineError, RefineRequest, RefineResponse, Refiner};

#[derive(Serialize, Deserialize)]
struct ErrorLine {
    #[serde(default)]
    id: Option<u64>,
    error: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Reply {
    Error(ErrorLine),
    Response(RefineResponse),
}

enum Channel {
    Process {
        child: Child,
        stdin: ChildStdin,
        stdout: BufReader<ChildStdout>,
    },
    Tcp {
        writer: TcpStream,
        reader: BufReader<TcpStream>,
    },
}

/// A refiner living in another process or behind a TCP socket; one JSON
/// object per line in each direction.
pub struct RemoteRefiner {
    channel: Channel,
}

fn transport(e: impl std::fmt::Display) -> RefineError {
    RefineError::Transport(e.to_string())
}

impl RemoteRefiner {
    /// Spawns `command` (split on whitespace) and talks over its stdio.
    pub fn spawn(command: &str) -> Result<Self, RefineError> {
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| transport("empty refiner command"))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| transport(format!("cannot start '{program}': {e}")))?;
        let stdin = child.stdin.take().ok_or_else(|| transport("no stdin"))?;
        let stdout = BufReader::new(child.stdout.take().ok_or_else(|| transport("no stdout"))?);
        Ok(RemoteRefiner {
            channel: Channel::Process {
                child,
                stdin,
                stdout,
            },
        })
    }

    pub fn connect(addr: &str) -> Result<Self, RefineError> {
        let writer = TcpStream::connect(addr)
            .map_err(|e| transport(format!("cannot connect to {addr}: {e}")))?;
        let reader = BufReader::new(writer.try_clone().map_err(transport)?);
        Ok(RemoteRefiner {
            channel: Channel::Tcp { writer, reader },
        })
    }

    fn exchange(&mut self, line: &str) -> Result<String, RefineError> {
        let (w, r): (&mut dyn Write, &mut dyn BufRead) = match &mut self.channel {
            Channel::Process { stdin, stdout, .. } => (stdin, stdout),
            Channel::Tcp { writer, reader } => (writer, reader),
        };
        w.write_all(line.as_bytes()).map_err(transport)?;
        w.write_all(b"\n").map_err(transport)?;
        w.flush().map_err(transport)?;
        let mut reply = String::new();
        if r.read_line(&mut reply).map_err(transport)? == 0 {
            return Err(transport("refiner closed the connection"));
        }
        Ok(reply)
    }
}

impl Drop for RemoteRefiner {
    fn drop(&mut self) {
        if let Channel::Process { child, .. } = &mut self.channel {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Refiner for RemoteRefiner {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn refine(&mut self, request: &RefineRequest) -> Result<RefineResponse, RefineError> {
        let line = serde_json::to_string(request).map_err(transport)?;
        let reply = self.exchange(&line)?;
        match serde_json::from_str::<Reply>(reply.trim()) {
            Ok(Reply::Error(e)) => Err(RefineError::Remote(e.error)),
            Ok(Reply::Response(r)) => Ok(r),
            Err(e) => Err(transport(format!("bad reply: {e}"))),
        }
    }
}

/// Answers requests read line by line until end of input. Bad lines and
/// refiner failures get an error object; the loop keeps going.
pub fn serve<R: BufRead, W: Write>(
    refiner: &mut dyn Refiner,
    input: R,
    mut output: W,
) -> std::io::Result<usize> {
    let mut answered = 0;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<RefineRequest>(&line) {
            Ok(request) => match refiner.refine(&request) {
                Ok(response) => serde_json::to_string(&response),
                Err(e) => serde_json::to_string(&ErrorLine {
                    id: Some(request.id),
                    error: e.to_string(),
                }),
            },
            Err(e) => serde_json::to_string(&ErrorLine {
                id: None,
                error: format!("bad request: {e}"),
            }),
        }
        .map_err(std::io::Error::other)?;
        writeln!(output, "{reply}")?;
        output.flush()?;
        answered += 1;
    }
    Ok(answered)
}
