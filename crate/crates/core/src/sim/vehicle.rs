use super::geometry::{wrap_angle, Obb, Polyline, Vec2};
use serde::{Deserialize, Serialize};

/// Acceleration command bounds, m/s^2.
pub const ACCEL_MIN: f64 = -6.0;
pub const ACCEL_MAX: f64 = 3.0;
/// Steering angle bound, rad.
const STEER_MAX: f64 = 0.6;

/// Pose, motion, and extents of one road agent in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// heading, rad
    pub psi: f64,
    /// forward speed, m/s, non-negative
    pub v: f64,
    /// longitudinal acceleration applied last step, m/s^2
    pub a: f64,
    pub width: f64,
    pub length: f64,
    pub route_id: usize,
    /// arclength along the route, m
    pub s: f64,
}

impl VehicleState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn footprint(&self) -> Obb {
        Obb {
            center: self.position(),
            heading: self.psi,
            width: self.width,
            length: self.length,
        }
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.psi) * self.v
    }

    fn wheelbase(&self) -> f64 {
        0.6 * self.length
    }

    /// Kinematic bicycle step: clamp the acceleration command, integrate
    /// speed, steer toward the route with pure pursuit, advance pose, and
    /// refresh the route arclength by local projection.
    pub fn integrate(&mut self, accel_cmd: f64, route: &Polyline, dt: f64) {
        let a = accel_cmd.clamp(ACCEL_MIN, ACCEL_MAX);
        let v_new = (self.v + a * dt).max(0.0);
        // effective acceleration after the v >= 0 clamp
        self.a = (v_new - self.v) / dt;
        self.v = v_new;

        let steer = self.pure_pursuit(route);
        self.psi = wrap_angle(self.psi + self.v / self.wheelbase() * steer.tan() * dt);
        self.x += self.v * self.psi.cos() * dt;
        self.y += self.v * self.psi.sin() * dt;

        let window = self.v * dt + 5.0;
        let (s, _) = route.project_in_range(self.position(), self.s - 2.0, self.s + window);
        // arclength never runs backward
        self.s = s.max(self.s);
    }

    /// Pure-pursuit steering toward a lookahead point on the route;
    /// lookahead grows with speed (4 m + 0.5 v).
    fn pure_pursuit(&self, route: &Polyline) -> f64 {
        let lookahead = 4.0 + 0.5 * self.v;
        let target = route.point_at((self.s + lookahead).min(route.length()));
        let rel = target - self.position();
        let eta = wrap_angle(rel.angle() - self.psi);
        let ld = rel.norm().max(1.0);
        (2.0 * self.wheelbase() * eta.sin())
            .atan2(ld)
            .clamp(-STEER_MAX, STEER_MAX)
    }
}

/// Longitudinal speed PID with anti-windup, producing accelerations in
/// [ACCEL_MIN, ACCEL_MAX].
#[derive(Debug, Clone)]
pub struct SpeedPid {
    kp: f64,
    ki: f64,
    kd: f64,
    integral: f64,
    prev_err: Option<f64>,
}

impl Default for SpeedPid {
    fn default() -> Self {
        Self::new(1.0, 0.1, 0.05)
    }
}

impl SpeedPid {
    pub fn new(kp: f64, ki: f64, kd: f64) -> Self {
        Self {
            kp,
            ki,
            kd,
            integral: 0.0,
            prev_err: None,
        }
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_err = None;
    }

    pub fn step(&mut self, target_speed: f64, current_speed: f64, dt: f64) -> f64 {
        let err = target_speed - current_speed;
        let derr = match self.prev_err {
            Some(prev) => (err - prev) / dt,
            None => 0.0,
        };
        self.prev_err = Some(err);
        let unclamped = self.kp * err + self.ki * self.integral + self.kd * derr;
        // integrate only while the actuator is not saturated in the same
        // direction
        if (unclamped < ACCEL_MAX || err < 0.0) && (unclamped > ACCEL_MIN || err > 0.0) {
            self.integral = (self.integral + err * dt).clamp(-20.0, 20.0);
        }
        (self.kp * err + self.ki * self.integral + self.kd * derr).clamp(ACCEL_MIN, ACCEL_MAX)
    }
}
