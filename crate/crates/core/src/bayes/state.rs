use nalgebra::DVector;

/// One state of the sampler. The confounder coefficient is not a state
/// variable; [`McmcState::beta_u`] always reports one.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcState {
    pub beta0: f64,
    pub beta_z: f64,
    pub beta_zbar: f64,
    pub beta_ubar: f64,
    pub beta_c: Vec<f64>,
    pub gamma0: f64,
    pub gamma_c: Vec<f64>,
    pub sigma_y2: f64,
    pub tau_u: f64,
    pub tau_z: f64,
    pub phi_u: f64,
    pub phi_z: f64,
    pub rho: f64,
    pub u: DVector<f64>,
}

impl McmcState {
    pub fn beta_u(&self) -> f64 {
        1.0
    }

    pub fn p(&self) -> usize {
        self.beta_c.len()
    }

    /// Names of every scalar parameter, in storage order.
    pub fn scalar_names(p: usize) -> Vec<String> {
        let mut names: Vec<String> = ["beta0", "beta_z", "beta_zbar", "beta_ubar"]
            .map(String::from)
            .to_vec();
        names.extend((1..=p).map(|j| format!("beta_c{j}")));
        names.push("gamma0".into());
        names.extend((1..=p).map(|j| format!("gamma_c{j}")));
        names.extend(["sigma_y2", "tau_u", "tau_z", "phi_u", "phi_z", "rho"].map(String::from));
        names
    }

    /// Scalar parameters in the order of [`scalar_names`](Self::scalar_names).
    pub fn scalars(&self) -> Vec<f64> {
        let mut v = vec![self.beta0, self.beta_z, self.beta_zbar, self.beta_ubar];
        v.extend(&self.beta_c);
        v.push(self.gamma0);
        v.extend(&self.gamma_c);
        v.extend([
            self.sigma_y2,
            self.tau_u,
            self.tau_z,
            self.phi_u,
            self.phi_z,
            self.rho,
        ]);
        v
    }

    /// Inverse of [`scalars`](Self::scalars).
    pub fn from_scalars(p: usize, values: &[f64], u: DVector<f64>) -> Option<Self> {
        if values.len() != 11 + 2 * p {
            return None;
        }
        let mut it = values.iter().copied();
        let mut next = || it.next().unwrap();
        let (beta0, beta_z, beta_zbar, beta_ubar) = (next(), next(), next(), next());
        let beta_c = (0..p).map(|_| next()).collect();
        let gamma0 = next();
        let gamma_c = (0..p).map(|_| next()).collect();
        Some(Self {
            beta0,
            beta_z,
            beta_zbar,
            beta_ubar,
            beta_c,
            gamma0,
            gamma_c,
            sigma_y2: next(),
            tau_u: next(),
            tau_z: next(),
            phi_u: next(),
            phi_z: next(),
            rho: next(),
            u,
        })
    }

    /// Looks up a scalar by name; `beta_u` is accepted and always one.
    pub fn get(&self, name: &str) -> Option<f64> {
        if name == "beta_u" {
            return Some(1.0);
        }
        let names = Self::scalar_names(self.p());
        names
            .iter()
            .position(|n| n == name)
            .map(|i| self.scalars()[i])
    }

    /// Regression coefficients in block order `[b0, bZ, bZbar, bUbar, bC...]`.
    pub(crate) fn beta_vector(&self) -> Vec<f64> {
        let mut v = vec![self.beta0, self.beta_z, self.beta_zbar, self.beta_ubar];
        v.extend(&self.beta_c);
        v
    }

    pub(crate) fn set_beta_vector(&mut self, v: &[f64]) {
        self.beta0 = v[0];
        self.beta_z = v[1];
        self.beta_zbar = v[2];
        self.beta_ubar = v[3];
        self.beta_c.copy_from_slice(&v[4..]);
    }

    pub(crate) fn gamma_vector(&self) -> Vec<f64> {
        let mut v = vec![self.gamma0];
        v.extend(&self.gamma_c);
        v
    }

    pub(crate) fn set_gamma_vector(&mut self, v: &[f64]) {
        self.gamma0 = v[0];
        self.gamma_c.copy_from_slice(&v[1..]);
    }

    pub(crate) fn hyper(&self) -> [f64; 5] {
        [self.tau_u, self.tau_z, self.phi_u, self.phi_z, self.rho]
    }

    pub(crate) fn set_hyper(&mut self, h: [f64; 5]) {
        [self.tau_u, self.tau_z, self.phi_u, self.phi_z, self.rho] = h;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_round_trip() {
        let s = McmcState {
            beta0: 0.1,
            beta_z: 1.0,
            beta_zbar: 0.8,
            beta_ubar: 0.5,
            beta_c: vec![1.0, 2.0],
            gamma0: -0.2,
            gamma_c: vec![3.0, 4.0],
            sigma_y2: 1.5,
            tau_u: 0.9,
            tau_z: 1.1,
            phi_u: 0.3,
            phi_z: 0.5,
            rho: 0.1,
            u: DVector::from_vec(vec![1.0, -1.0]),
        };
        let names = McmcState::scalar_names(2);
        assert_eq!(names.len(), s.scalars().len());
        assert_eq!(
            McmcState::from_scalars(2, &s.scalars(), s.u.clone()).unwrap(),
            s
        );
        assert_eq!(s.get("gamma_c2"), Some(4.0));
        assert_eq!(s.get("beta_u"), Some(1.0));
        assert_eq!(s.get("nope"), None);
    }
}
