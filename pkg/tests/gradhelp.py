"""Shared gradient-check loop for tests."""
from moedti.gradcheck import check_gradients, kink_margin


def check_until(n, make_fn, tol=1e-4, margin=1e-3):
    """Gradcheck ``n`` configurations that sit away from ReLU/max kinks.

    ``make_fn(k)`` returns ``(loss_fn, params)`` for attempt ``k``; attempts are capped.
    """
    done = attempts = 0
    worst = 0.0
    while done < n:
        attempts += 1
        assert attempts <= 20 * n, "could not find kink-free configurations"
        fn, params = make_fn(attempts)
        if kink_margin(fn) < margin:
            continue
        res = check_gradients(fn, params)
        assert res.max_rel_error < tol, res
        worst = max(worst, res.max_rel_error)
        done += 1
    return worst
