//! Classical fourth-order Runge-Kutta for second-order systems
//! `x' = v, v' = a(x, v)`, shared by the particle and kinetic solvers.

/// Workspace reused across steps to keep the stage buffers allocated once.
#[derive(Debug, Default)]
pub(crate) struct Rk4Workspace {
    xs: Vec<f64>,
    vs: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    v2: Vec<f64>,
    v3: Vec<f64>,
    v4: Vec<f64>,
}

impl Rk4Workspace {
    fn ensure(&mut self, len: usize) {
        for buf in [
            &mut self.xs,
            &mut self.vs,
            &mut self.k1,
            &mut self.k2,
            &mut self.k3,
            &mut self.k4,
            &mut self.v2,
            &mut self.v3,
            &mut self.v4,
        ] {
            buf.resize(len, 0.0);
        }
    }

    /// Advances `(pos, vel)` in place by one step of size `dt`. Every stage
    /// evaluates `accel` on the whole system at once, so pairwise
    /// antisymmetry of the acceleration is preserved stage by stage.
    pub(crate) fn step<A>(&mut self, pos: &mut [f64], vel: &mut [f64], dt: f64, mut accel: A)
    where
        A: FnMut(&[f64], &[f64], &mut [f64]),
    {
        let len = pos.len();
        self.ensure(len);
        let half = 0.5 * dt;

        accel(pos, vel, &mut self.k1);

        for i in 0..len {
            self.xs[i] = pos[i] + half * vel[i];
            self.v2[i] = vel[i] + half * self.k1[i];
        }
        self.vs.copy_from_slice(&self.v2);
        accel(&self.xs, &self.vs, &mut self.k2);

        for i in 0..len {
            self.xs[i] = pos[i] + half * self.v2[i];
            self.v3[i] = vel[i] + half * self.k2[i];
        }
        self.vs.copy_from_slice(&self.v3);
        accel(&self.xs, &self.vs, &mut self.k3);

        for i in 0..len {
            self.xs[i] = pos[i] + dt * self.v3[i];
            self.v4[i] = vel[i] + dt * self.k3[i];
        }
        self.vs.copy_from_slice(&self.v4);
        accel(&self.xs, &self.vs, &mut self.k4);

        let sixth = dt / 6.0;
        for i in 0..len {
            pos[i] += sixth * (vel[i] + 2.0 * self.v2[i] + 2.0 * self.v3[i] + self.v4[i]);
            vel[i] += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}
