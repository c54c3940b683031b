"""Attention-cost accounting: analytic paradigm comparison plus trace-based
measurement.

Only the quadratic attention-score term is counted (the quantity the paradigm
comparison is about); projections and MLPs are ignored.  With n frames of L
tokens each:

- full-sequence: every step attends over all n*L tokens;
- frame-by-frame autoregressive: step j attends over j*L tokens
  (the popular cubic upper-bound form is also reported);
- autoregressive with KV caching: step j computes L x jL scores;
- interleaved insertion/denoising: under a linear reveal schedule the
  actively denoised fraction averages to 1/3 of the sequence in each of the
  two trajectory phases, at the price of `alpha` times more steps.

Empirical costs sum ``(n_active * L)**2`` over the steps of a sample trace,
where ``n_active`` counts the frames actually denoised in the step.
"""

from __future__ import annotations

from dataclasses import dataclass

from .sampler import SampleTrace


@dataclass(frozen=True)
class FlopsReport:
    full_seq: float
    ar_nocache: float  # exact sum T_AR * L^2 * sum_j j^2
    ar_nocache_bound: float  # (n/3) * T_AR * (nL)^2 upper-bound form
    ar_cache: float  # exact sum T_AR * L^2 * sum_j j
    ar_cache_approx: float  # (1/2) * T_AR * (nL)^2 form
    flowception_analytic: float  # (alpha/3) * T_full * (nL)^2
    flowception_empirical: float | None
    params: dict

    def rows(self) -> list[tuple[str, float]]:
        out = [
            ("full-sequence", self.full_seq),
            ("autoregressive (exact)", self.ar_nocache),
            ("autoregressive (n/3 bound)", self.ar_nocache_bound),
            ("autoregressive+cache (exact)", self.ar_cache),
            ("autoregressive+cache (1/2 form)", self.ar_cache_approx),
            ("interleaved (analytic)", self.flowception_analytic),
        ]
        if self.flowception_empirical is not None:
            out.append(("interleaved (measured)", self.flowception_empirical))
        return out


def analytic_costs(
    n: int, tokens_per_frame: int, t_full: float, t_ar: float, alpha: float
) -> FlopsReport:
    if min(n, tokens_per_frame) < 1 or min(t_full, t_ar) <= 0 or alpha <= 0:
        raise ValueError("all cost parameters must be positive")
    L = tokens_per_frame
    nl2 = (n * L) ** 2
    sum_j = n * (n + 1) // 2
    sum_j2 = n * (n + 1) * (2 * n + 1) // 6
    return FlopsReport(
        full_seq=t_full * nl2,
        ar_nocache=t_ar * L**2 * sum_j2,
        ar_nocache_bound=(n / 3.0) * t_ar * nl2,
        ar_cache=t_ar * L**2 * sum_j,
        ar_cache_approx=0.5 * t_ar * nl2,
        flowception_analytic=(alpha / 3.0) * t_full * nl2,
        flowception_empirical=None,
        params={"n": n, "L": L, "T_full": t_full, "T_AR": t_ar, "alpha": alpha},
    )


def empirical_cost(trace: SampleTrace, tokens_per_frame: int) -> float:
    """Sum over trace steps of (active frames * tokens)^2."""
    L = tokens_per_frame
    return float(sum((rec.n_active * L) ** 2 for rec in trace.records))
