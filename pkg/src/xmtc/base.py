"""Minimal estimator base class following the scikit-learn parameter convention."""

from __future__ import annotations

import inspect

from .errors import NotFittedError


class BaseEstimator:
    """Provides ``get_params``/``set_params`` introspected from ``__init__``.

    Subclasses must list every hyperparameter as an explicit keyword argument
    of ``__init__`` and store it under the same attribute name, so that
    estimators can be cloned from their parameters alone.
    """

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [
            name
            for name, p in sig.parameters.items()
            if name != "self" and p.kind not in (p.VAR_POSITIONAL, p.VAR_KEYWORD)
        ]

    def get_params(self, deep: bool = True) -> dict:
        """Return hyperparameters; with ``deep``, nested estimators are expanded
        under ``<param>__<subparam>`` keys."""
        out: dict = {}
        for name in self._param_names():
            value = getattr(self, name)
            out[name] = value
            if deep and hasattr(value, "get_params"):
                for sub, sub_value in value.get_params(deep=True).items():
                    out[f"{name}__{sub}"] = sub_value
        return out

    def set_params(self, **params) -> "BaseEstimator":
        valid = set(self._param_names())
        for key, value in params.items():
            name, _, sub = key.partition("__")
            if name not in valid:
                raise ValueError(
                    f"invalid parameter {name!r} for {type(self).__name__}; "
                    f"valid parameters are {sorted(valid)}"
                )
            if sub:
                getattr(self, name).set_params(**{sub: value})
            else:
                setattr(self, name, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params(deep=False).items())
        return f"{type(self).__name__}({args})"


def check_is_fitted(estimator, attributes: tuple[str, ...]) -> None:
    """Raise :class:`NotFittedError` unless all fitted attributes are present."""
    missing = [a for a in attributes if getattr(estimator, a, None) is None]
    if missing:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first "
            f"(missing {', '.join(missing)})"
        )
