//! Line-delimited JSON over TCP on the loopback interface.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;

use crate::service::Registry;

/// Binds `127.0.0.1:port` (0 picks a free port).
pub fn bind(port: u16) -> io::Result<TcpListener> {
    TcpListener::bind(("127.0.0.1", port))
}

/// Accepts connections forever, one thread each.
pub fn serve(listener: TcpListener, registry: Arc<Registry>) -> io::Result<()> {
    for conn in listener.incoming() {
        let conn = conn?;
        let reg = Arc::clone(&registry);
        thread::spawn(move || {
            let _ = handle_connection(conn, &reg);
        });
    }
    Ok(())
}

fn handle_connection(conn: TcpStream, reg: &Registry) -> io::Result<()> {
    let mut out = conn.try_clone()?;
    for line in BufReader::new(conn).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = reg.handle_line(&line);
        writeln!(out, "{resp}")?;
        out.flush()?;
    }
    Ok(())
}
