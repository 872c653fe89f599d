"""Proposal-scale schedulers for the random-walk Metropolis kernel."""
import logging

import numpy as np


def get_scaler(cfg_smc, base_scales):
    mode = cfg_smc.get("scale_mode", "robbins_monro")
    return ProposalScaler(
        mode,
        base_scales,
        initial_scale=cfg_smc["initial_scale"],
        target=cfg_smc["target_acceptance"],
        gain=cfg_smc.get("adaptation_gain", 1.0),
    )


class ProposalScaler(object):
    """Per-parameter proposal sd, lambda * base.

    ``base`` starts at the prior sd and lambda at ``initial_scale``.
    ``step(acceptance, spread)`` is called once between SMC iterations,
    never inside a rejuvenation pass, so each pass runs a fixed kernel.
    """

    def __init__(self, mode, base_scales, initial_scale=0.1, target=0.23, gain=1.0):
        super(ProposalScaler, self).__init__()
        logger = logging.getLogger("global")

        assert mode in ["robbins_monro", "constant"]
        assert initial_scale > 0
        base = np.asarray(base_scales, dtype=float)
        assert base.ndim == 1 and np.all(base > 0)
        self.mode = mode
        self.target = target
        self.gain = gain
        self.cur_iter = 0
        self.base = base
        self.log_scale = float(np.log(initial_scale))
        logger.info(
            "Proposal scaler: mode {} initial {} target {}".format(
                mode, initial_scale, target
            )
        )

    def step(self, acceptance, spread=None):
        self.cur_iter += 1
        self._step(acceptance)
        if spread is not None:
            spread = np.asarray(spread, dtype=float)
            self.base = np.where(spread > 0, spread, self.base)

    def _step(self, acceptance):
        if self.mode == "robbins_monro":
            self.log_scale += self.gain * (acceptance - self.target) / np.sqrt(self.cur_iter)
        elif self.mode == "constant":
            pass
        else:
            raise NotImplementedError

    def get_scale(self):
        return float(np.exp(self.log_scale))

    def scales(self):
        return self.get_scale() * self.base
