//! Minimal GPX 1.1 track reader: `<trk>/<trkseg>/<trkpt lat lon>` with
//! optional `<ele>`, `<time>` and the track-level `<type>` activity tag.
//! One trajectory per `<trk>`; segments of a track are concatenated.

use quick_xml::events::Event;
use quick_xml::Reader;

use super::{RawTrack, TrackPoint};

#[derive(Debug, thiserror::Error)]
pub enum GpxError {
    #[error("invalid xml: {0}")]
    Xml(#[from] quick_xml::Error),
    #[error("invalid xml attribute: {0}")]
    Attr(#[from] quick_xml::events::attributes::AttrError),
    #[error("trkpt {index}: {message}")]
    BadPoint { index: usize, message: String },
    #[error("invalid timestamp {0:?}")]
    BadTime(String),
}

pub fn parse_gpx(text: &str) -> Result<Vec<RawTrack>, GpxError> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);

    let mut tracks: Vec<RawTrack> = Vec::new();
    let mut current: Option<RawTrack> = None;
    let mut in_trkpt = false;
    let mut pending: Option<TrackPoint> = None;
    let mut text_target: Option<&'static str> = None;
    let mut point_index = 0usize;

    loop {
        let event = reader.read_event()?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let self_closing = matches!(event, Event::Empty(_));
                match e.local_name().as_ref() {
                    b"trk" => {
                        if !self_closing {
                            current = Some(RawTrack::default());
                        }
                    }
                    b"trkpt" => {
                        let mut lat = None;
                        let mut lon = None;
                        for attr in e.attributes() {
                            let attr = attr?;
                            let value = String::from_utf8_lossy(&attr.value).into_owned();
                            match attr.key.local_name().as_ref() {
                                b"lat" => lat = value.trim().parse::<f64>().ok().filter(|v| v.is_finite()),
                                b"lon" => lon = value.trim().parse::<f64>().ok().filter(|v| v.is_finite()),
                                _ => {}
                            }
                        }
                        let (lon, lat) = match (lon, lat) {
                            (Some(lon), Some(lat)) => (lon, lat),
                            _ => {
                                return Err(GpxError::BadPoint {
                                    index: point_index,
                                    message: "missing or malformed lat/lon".into(),
                                })
                            }
                        };
                        point_index += 1;
                        let point = TrackPoint { lon, lat, ele: None, time: None };
                        if self_closing {
                            if let Some(track) = current.as_mut() {
                                track.points.push(point);
                            }
                        } else {
                            pending = Some(point);
                            in_trkpt = true;
                        }
                    }
                    b"ele" if in_trkpt && !self_closing => text_target = Some("ele"),
                    b"time" if in_trkpt && !self_closing => text_target = Some("time"),
                    b"type" if current.is_some() && !in_trkpt && !self_closing => {
                        text_target = Some("type")
                    }
                    b"name" if current.is_some() && !in_trkpt && !self_closing => {
                        text_target = Some("name")
                    }
                    _ => {}
                }
            }
            Event::Text(t) => {
                if let Some(target) = text_target {
                    let value = t.unescape()?.into_owned();
                    match target {
                        "ele" => {
                            if let Some(p) = pending.as_mut() {
                                p.ele = value.trim().parse::<f64>().ok().filter(|v| v.is_finite());
                            }
                        }
                        "time" => {
                            if let Some(p) = pending.as_mut() {
                                let parsed = chrono::DateTime::parse_from_rfc3339(value.trim())
                                    .map_err(|_| GpxError::BadTime(value.clone()))?;
                                p.time = Some(parsed.timestamp());
                            }
                        }
                        "type" => {
                            if let Some(t) = current.as_mut() {
                                t.activity = Some(value.trim().to_ascii_lowercase());
                            }
                        }
                        "name" => {
                            if let Some(t) = current.as_mut() {
                                if t.name.is_none() {
                                    t.name = Some(value.trim().to_string());
                                }
                            }
                        }
                        _ => {}
                    }
                }
            }
            Event::End(e) => match e.local_name().as_ref() {
                b"trkpt" => {
                    in_trkpt = false;
                    text_target = None;
                    if let (Some(track), Some(point)) = (current.as_mut(), pending.take()) {
                        track.points.push(point);
                    }
                }
                b"trk" => {
                    if let Some(track) = current.take() {
                        tracks.push(track);
                    }
                }
                b"ele" | b"time" | b"type" | b"name" => text_target = None,
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(tracks)
}
