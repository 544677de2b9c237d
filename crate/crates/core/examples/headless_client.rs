//! Starts a server on an ephemeral port and drives it as a headless client
//! over newline-delimited JSON.

use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::path::Path;
use std::thread;

use pairloop::session::server::serve_listener;
use pairloop::session::{ServerEnvelope, ServerFrame, SessionConfig};

fn main() {
    let config = SessionConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/configs/codellaborator.json")).expect("bundled config");
    let backend = config.build_backend().expect("scripted backend");
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = thread::spawn(move || serve_listener(listener, config, backend, Some(1)));

    let mut client = TcpStream::connect(addr).unwrap();
    for frame in [
        r#"{"type":"openSession","initialText":"nums = [3, 1, 2]\n"}"#,
        r#"{"type":"caretMove","position":{"line":0,"column":4}}"#,
        r#"{"type":"userMessage","text":"how do I sort this in place?"}"#,
    ] {
        println!(">> {frame}");
        writeln!(client, "{frame}").unwrap();
    }

    let mut reader = BufReader::new(client.try_clone().unwrap());
    let mut line = String::new();
    while reader.read_line(&mut line).unwrap() > 0 {
        let env: ServerEnvelope = serde_json::from_str(&line).expect("server frame");
        print!("<< {line}");
        line.clear();
        if matches!(env.frame, ServerFrame::AgentMessage { .. }) {
            break;
        }
    }
    client.shutdown(Shutdown::Write).unwrap();
    while reader.read_line(&mut line).unwrap() > 0 {
        print!("<< {line}");
        line.clear();
    }
    server.join().unwrap().expect("server");
}
