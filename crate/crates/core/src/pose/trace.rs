//! Pose trace CSV I/O, resampling and the jerk smoothness metric.

use std::io::{Read, Write};

use super::{slerp, Joint, PoseError, PoseTrace, Quat, ThreePointPose, Vec3, DEFAULT_RATE};

pub const TRACE_HEADER: [&str; 22] = [
    "t", "head_px", "head_py", "head_pz", "head_qw", "head_qx", "head_qy", "head_qz", "lh_px",
    "lh_py", "lh_pz", "lh_qw", "lh_qx", "lh_qy", "lh_qz", "rh_px", "rh_py", "rh_pz", "rh_qw",
    "rh_qx", "rh_qy", "rh_qz",
];

/// Quaternions further than this from unit norm are rejected on load.
const QUAT_NORM_TOLERANCE: f64 = 1e-2;

/// Reads a trace in the 22-column CSV schema. Row numbers in errors count
/// data rows from 1. Quaternions are renormalized; the rate is inferred from
/// the mean frame spacing.
pub fn load_pose_trace<R: Read>(reader: R) -> Result<PoseTrace, PoseError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(reader);
    let mut records = csv.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| PoseError::Format {
            row: 0,
            message: e.to_string(),
        })?,
        None => {
            return Err(PoseError::Format {
                row: 0,
                message: "missing header".into(),
            })
        }
    };
    if header.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(PoseError::Format {
            row: 0,
            message: "header does not match the trace schema".into(),
        });
    }

    let mut frames: Vec<ThreePointPose> = Vec::new();
    for (i, record) in records.enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| PoseError::Format {
            row,
            message: e.to_string(),
        })?;
        if record.len() != TRACE_HEADER.len() {
            return Err(PoseError::Format {
                row,
                message: format!(
                    "expected {} columns, got {}",
                    TRACE_HEADER.len(),
                    record.len()
                ),
            });
        }
        let mut values = [0.0f64; 22];
        for (k, field) in record.iter().enumerate() {
            values[k] = field.trim().parse().map_err(|_| PoseError::Format {
                row,
                message: format!("column `{}` is not a number: {field:?}", TRACE_HEADER[k]),
            })?;
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(PoseError::Data {
                row,
                message: "non-finite value".into(),
            });
        }
        let t = values[0];
        if let Some(prev) = frames.last() {
            if t <= prev.timestamp {
                return Err(PoseError::Format {
                    row,
                    message: format!("timestamp {t} does not increase past {}", prev.timestamp),
                });
            }
        }
        let mut joints = [Joint::default(); 3];
        for (j, joint) in joints.iter_mut().enumerate() {
            let v = &values[1 + 7 * j..8 + 7 * j];
            let q = Quat::new(v[3], v[4], v[5], v[6]);
            let norm = q.norm();
            if (norm - 1.0).abs() > QUAT_NORM_TOLERANCE {
                return Err(PoseError::Data {
                    row,
                    message: format!("quaternion norm {norm} of joint {j} is off by more than {QUAT_NORM_TOLERANCE}"),
                });
            }
            *joint = Joint::new(Vec3::new(v[0], v[1], v[2]), q.normalized());
        }
        frames.push(ThreePointPose::from_joints(t, joints));
    }
    let rate = match frames.as_slice() {
        [first, .., last] => (frames.len() - 1) as f64 / (last.timestamp - first.timestamp),
        _ => DEFAULT_RATE,
    };
    Ok(PoseTrace { frames, rate })
}

/// Writes a trace in the CSV schema using shortest round-trip float text.
pub fn write_pose_trace<W: Write>(trace: &PoseTrace, writer: W) -> Result<(), PoseError> {
    let to_io = |e: csv::Error| PoseError::Io(std::io::Error::other(e));
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(TRACE_HEADER).map_err(to_io)?;
    for frame in &trace.frames {
        let mut fields = Vec::with_capacity(22);
        fields.push(frame.timestamp.to_string());
        for joint in frame.joints() {
            let p = joint.position;
            let q = joint.orientation;
            fields.extend(
                [p.x, p.y, p.z, q.w, q.x, q.y, q.z]
                    .iter()
                    .map(f64::to_string),
            );
        }
        csv.write_record(&fields).map_err(to_io)?;
    }
    csv.flush()?;
    Ok(())
}

/// Resamples onto the uniform grid `t0 + k / target_rate` up to the last
/// timestamp. Positions are interpolated linearly, orientations by slerp.
pub fn resample(trace: &PoseTrace, target_rate: f64) -> Result<PoseTrace, PoseError> {
    if trace.len() < 2 {
        return Err(PoseError::Domain(
            "resampling needs at least two frames".into(),
        ));
    }
    if !(target_rate > 0.0) || !target_rate.is_finite() {
        return Err(PoseError::Domain(format!(
            "target rate must be positive, got {target_rate}"
        )));
    }
    let t0 = trace.start_time();
    let span = trace.end_time() - t0;
    let count = (span * target_rate + 1e-9).floor() as usize + 1;
    let src = &trace.frames;
    let mut seg = 0;
    let mut frames = Vec::with_capacity(count);
    for k in 0..count {
        let t = t0 + k as f64 / target_rate;
        while seg + 2 < src.len() && src[seg + 1].timestamp < t {
            seg += 1;
        }
        let (a, b) = (&src[seg], &src[seg + 1]);
        let u = ((t - a.timestamp) / (b.timestamp - a.timestamp)).clamp(0.0, 1.0);
        let mut joints = [Joint::default(); 3];
        for ((out, ja), jb) in joints.iter_mut().zip(a.joints()).zip(b.joints()) {
            *out = Joint::new(
                ja.position.lerp(jb.position, u),
                slerp(ja.orientation, jb.orientation, u),
            );
        }
        frames.push(ThreePointPose::from_joints(t, joints));
    }
    Ok(PoseTrace {
        frames,
        rate: target_rate,
    })
}

/// Per-window jerk magnitudes averaged over the three joints. Entry `i` uses
/// frames `i..i+4` and is centred between frames `i+1` and `i+2`.
pub fn jerk_series(trace: &PoseTrace) -> Result<Vec<f64>, PoseError> {
    if trace.len() < 4 {
        return Err(PoseError::Domain(format!(
            "jerk needs at least 4 frames, got {}",
            trace.len()
        )));
    }
    let dt = 1.0 / trace.rate;
    let inv_dt3 = 1.0 / (dt * dt * dt);
    Ok(trace
        .frames
        .windows(4)
        .map(|w| {
            let mut sum = 0.0;
            for j in 0..3 {
                let p = |k: usize| w[k].joints()[j].position;
                let third = p(3) - p(2) * 3.0 + p(1) * 3.0 - p(0);
                sum += third.norm() * inv_dt3;
            }
            sum / 3.0
        })
        .collect())
}

/// Mean magnitude of third-order finite differences of joint positions, in
/// m/s^3, averaged over the three joints.
pub fn jerk_metric(trace: &PoseTrace) -> Result<f64, PoseError> {
    let series = jerk_series(trace)?;
    Ok(series.iter().sum::<f64>() / series.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn row(t: f64, head_q: [f64; 4]) -> String {
        format!(
            "{t},0,1.7,0,{},{},{},{},-0.3,1.2,0.2,1,0,0,0,0.3,1.2,0.2,1,0,0,0",
            head_q[0], head_q[1], head_q[2], head_q[3]
        )
    }

    fn csv_text(rows: &[String]) -> String {
        let mut s = TRACE_HEADER.join(",");
        for r in rows {
            s.push('\n');
            s.push_str(r);
        }
        s.push('\n');
        s
    }

    fn trace_of(positions: &[(f64, Vec3)], rate: f64) -> PoseTrace {
        let frames = positions
            .iter()
            .map(|&(t, p)| {
                let j = Joint::new(p, Quat::IDENTITY);
                ThreePointPose::from_joints(t, [j, j, j])
            })
            .collect();
        PoseTrace::new(frames, rate)
    }

    #[test]
    fn loads_three_rows() {
        let text = csv_text(&[
            row(0.0, [1.0, 0.0, 0.0, 0.0]),
            row(0.1, [1.0, 0.0, 0.0, 0.0]),
            row(0.2, [1.0, 0.0, 0.0, 0.0]),
        ]);
        let trace = load_pose_trace(text.as_bytes()).unwrap();
        assert_eq!(trace.len(), 3);
        assert!((trace.rate - 10.0).abs() < 1e-9);
    }

    #[test]
    fn drifted_quaternion_is_normalized() {
        let text = csv_text(&[row(0.0, [1.005, 0.0, 0.0, 0.0])]);
        let trace = load_pose_trace(text.as_bytes()).unwrap();
        assert_eq!(trace.frames[0].head.orientation, Quat::IDENTITY);
    }

    #[test]
    fn far_from_unit_quaternion_is_data_error() {
        let text = csv_text(&[
            row(0.0, [1.0, 0.0, 0.0, 0.0]),
            row(0.1, [2.0, 0.0, 0.0, 0.0]),
        ]);
        assert!(matches!(
            load_pose_trace(text.as_bytes()),
            Err(PoseError::Data { row: 2, .. })
        ));
    }

    #[test]
    fn duplicate_timestamp_is_format_error() {
        let text = csv_text(&[
            row(0.0, [1.0, 0.0, 0.0, 0.0]),
            row(0.0, [1.0, 0.0, 0.0, 0.0]),
        ]);
        assert!(matches!(
            load_pose_trace(text.as_bytes()),
            Err(PoseError::Format { row: 2, .. })
        ));
    }

    #[test]
    fn wrong_header_is_rejected() {
        let text = "t,x\n0,1\n";
        assert!(matches!(
            load_pose_trace(text.as_bytes()),
            Err(PoseError::Format { row: 0, .. })
        ));
    }

    #[test]
    fn write_then_load_round_trips() {
        let mut trace = trace_of(
            &[
                (0.0, Vec3::new(0.1, 1.0, 0.3)),
                (1.0 / 30.0, Vec3::new(0.2, 1.1, 0.3)),
            ],
            30.0,
        );
        trace.frames[1].head.orientation = Quat::from_yaw(0.3);
        let mut buf = Vec::new();
        write_pose_trace(&trace, &mut buf).unwrap();
        let back = load_pose_trace(buf.as_slice()).unwrap();
        assert_eq!(back.frames.len(), 2);
        for (a, b) in back.frames.iter().zip(&trace.frames) {
            assert_eq!(a.timestamp, b.timestamp);
            assert_eq!(a.head.position, b.head.position);
            assert!(a.head.orientation.angle_to(b.head.orientation) < 1e-15);
        }
    }

    #[test]
    fn resample_linear_positions() {
        let trace = trace_of(&[(0.0, Vec3::ZERO), (1.0, Vec3::new(1.0, 0.0, 0.0))], 1.0);
        let out = resample(&trace, 4.0).unwrap();
        let xs: Vec<f64> = out.frames.iter().map(|f| f.head.position.x).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn resample_slerps_orientation() {
        let mut trace = trace_of(&[(0.0, Vec3::ZERO), (1.0, Vec3::ZERO)], 1.0);
        trace.frames[1].head.orientation = Quat::from_yaw(FRAC_PI_2);
        let out = resample(&trace, 2.0).unwrap();
        assert!(
            out.frames[1]
                .head
                .orientation
                .angle_to(Quat::from_yaw(FRAC_PI_4))
                < 1e-12
        );
    }

    #[test]
    fn resample_at_own_rate_is_identity() {
        let positions: Vec<(f64, Vec3)> = (0..20)
            .map(|i| {
                (
                    i as f64 / 30.0,
                    Vec3::new((i as f64).sin(), 1.0, (i as f64 * 0.3).cos()),
                )
            })
            .collect();
        let mut trace = trace_of(&positions, 30.0);
        for (i, f) in trace.frames.iter_mut().enumerate() {
            f.left_hand.orientation =
                Quat::from_axis_angle(Vec3::new(1.0, 0.5, 0.0), i as f64 * 0.2);
        }
        let out = resample(&trace, 30.0).unwrap();
        assert_eq!(out.len(), trace.len());
        for (a, b) in out.frames.iter().zip(&trace.frames) {
            assert!((a.timestamp - b.timestamp).abs() < 1e-9);
            assert!((a.head.position - b.head.position).norm() < 1e-9);
            assert!(a.left_hand.orientation.angle_to(b.left_hand.orientation) < 1e-9);
        }
    }

    #[test]
    fn resample_single_frame_is_domain_error() {
        let trace = trace_of(&[(0.0, Vec3::ZERO)], 30.0);
        assert!(matches!(resample(&trace, 30.0), Err(PoseError::Domain(_))));
    }

    #[test]
    fn jerk_of_constant_and_linear_traces_is_zero() {
        let constant: Vec<(f64, Vec3)> = (0..10)
            .map(|i| (i as f64 / 30.0, Vec3::new(0.2, 1.0, 0.4)))
            .collect();
        assert_eq!(jerk_metric(&trace_of(&constant, 30.0)).unwrap(), 0.0);
        let linear: Vec<(f64, Vec3)> = (0..10)
            .map(|i| (i as f64 / 30.0, Vec3::new(i as f64, 0.0, 0.0)))
            .collect();
        assert_eq!(jerk_metric(&trace_of(&linear, 30.0)).unwrap(), 0.0);
    }

    #[test]
    fn jerk_of_cubic_matches_analytic_third_derivative() {
        // x(t) = a t^3 has constant third derivative 6a.
        let a = 1.7;
        let rate = 30.0;
        let cubic: Vec<(f64, Vec3)> = (0..31)
            .map(|i| {
                let t = i as f64 / rate;
                (t, Vec3::new(a * t * t * t, 0.0, 0.0))
            })
            .collect();
        let jerk = jerk_metric(&trace_of(&cubic, rate)).unwrap();
        assert!((jerk - 6.0 * a).abs() < 1e-6, "jerk {jerk}");
    }

    #[test]
    fn jerk_needs_four_frames() {
        let short: Vec<(f64, Vec3)> = (0..3).map(|i| (i as f64, Vec3::ZERO)).collect();
        assert!(jerk_metric(&trace_of(&short, 1.0)).is_err());
    }
}
