//! Named experiment configurations for `list-scenarios` and `--preset`.

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub config: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "gke-bound",
        summary: "exact fitness, 16 evenly spaced objects, gap twice the noise",
        config: "scenario.kind = equally\nscenario.n = 16\nscenario.ratio = 2\nalgo.variant = gke\npolicy.pi_th = 0.001\nrun.trials = 10000\n",
    },
    Preset {
        name: "gka-equally-16",
        summary: "pairwise fitness, 16 evenly spaced objects",
        config: "scenario.kind = equally\nscenario.n = 16\nscenario.ratio = 2\nalgo.variant = gka\npolicy.pi_th = 0.3, 0.1, 0.03, 0.01, 0.003\n",
    },
    Preset {
        name: "gra-equally-64",
        summary: "pairwise fitness with elimination, 64 evenly spaced objects",
        config: "scenario.kind = equally\nscenario.n = 64\nscenario.ratio = 2\nalgo.variant = gra\npolicy.pi_th = 0.3, 0.1, 0.03, 0.01\n",
    },
    Preset {
        name: "tournament-equally-16",
        summary: "two-object groups, 16 evenly spaced objects",
        config: "scenario.kind = equally\nscenario.n = 16\nscenario.ratio = 2\nalgo.variant = tournament\nalgo.group_size = 2\npolicy.pi_th = 0.3, 0.1, 0.03, 0.01\n",
    },
    Preset {
        name: "uniform-equally-16",
        summary: "non-adaptive baseline, 16 evenly spaced objects",
        config: "scenario.kind = equally\nscenario.n = 16\nscenario.ratio = 2\nalgo.variant = uniform\nsweep.uniform_m = 1, 2, 4, 8, 16\n",
    },
    Preset {
        name: "bias-gaussian-64",
        summary: "bounded budget K = 8 with estimated worker bias",
        config: "scenario.kind = gaussian\nscenario.n = 64\nscenario.ratio = 3\nworkers.bias_ratio = 1\nalgo.variant = bgka\nalgo.bias_mode = estimate\npolicy.k = 8\npolicy.pi_th = 0.1, 0.03, 0.01, 0.003, 0.001\n",
    },
    Preset {
        name: "quantized-gaussian-64",
        summary: "bounded budget K = 3, 8-level Lloyd quantizer",
        config: "scenario.kind = gaussian\nscenario.n = 64\nscenario.ratio = 3\nalgo.variant = bgka\npolicy.k = 3\npolicy.pi_th = 0.3, 0.1, 0.03, 0.01\nquantizer.kind = lloyd\nquantizer.levels = 8\nquantizer.dist = III\nquantizer.gamma = 0.5\n",
    },
    Preset {
        name: "variance-gaussian-64",
        summary: "bounded budget K = 8, biased workers with random variances",
        config: "scenario.kind = gaussian\nscenario.n = 64\nscenario.ratio = 3\nworkers.bias_ratio = 1\nworkers.variance_spread = 1\nalgo.variant = bgka\nalgo.bias_mode = estimate\npolicy.k = 8\npolicy.pi_th = 0.1, 0.03, 0.01, 0.003\nquantizer.kind = lloyd\nquantizer.levels = 16\n",
    },
    Preset {
        name: "majority-2",
        summary: "two objects compared by 101 workers",
        config: "scenario.kind = equally\nscenario.n = 2\nscenario.ratio = 0.2\nalgo.variant = majority\nalgo.workers = 101\nrun.trials = 100000\n",
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}
