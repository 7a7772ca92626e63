from inspect import isclass, signature
from typing import Callable, Optional, Type

from pydantic import BaseModel, create_model

from gip_planner.graph.views import GipInstance
from gip_planner.separation.registry.views import OracleModel, OracleRegistry, RegisteredOracle
from gip_planner.separation.views import Candidate, Cut, SeparationError

_CONTEXT_PARAMS = ('inst', 'cand')


class Registry:
	"""Service for registering and running separation oracles"""

	def __init__(self):
		self.registry = OracleRegistry()

	def _create_param_model(self, function: Callable) -> Type[BaseModel]:
		"""Creates a Pydantic model from function signature"""
		sig = signature(function)
		params = {
			name: (param.annotation, ... if param.default == param.empty else param.default)
			for name, param in sig.parameters.items()
			if name not in _CONTEXT_PARAMS
		}
		return create_model(
			f'{function.__name__}Params',
			__base__=OracleModel,
			**params,  # type: ignore
		)

	def oracle(self, description: str, param_model: Optional[Type[BaseModel]] = None):
		"""Decorator for registering oracles"""

		def decorator(func: Callable):
			actual_param_model = param_model or self._create_param_model(func)
			self.registry.oracles[func.__name__] = RegisteredOracle(
				name=func.__name__,
				description=description,
				function=func,
				param_model=actual_param_model,
			)
			return func

		return decorator

	@property
	def names(self) -> list[str]:
		return list(self.registry.oracles)

	def execute_oracle(
		self, oracle_name: str, params: dict, inst: GipInstance, cand: Candidate
	) -> list[Cut]:
		"""Run a registered oracle on one candidate"""
		if oracle_name not in self.registry.oracles:
			raise ValueError(f'Oracle {oracle_name} not found')

		oracle = self.registry.oracles[oracle_name]
		try:
			validated_params = oracle.param_model(**params)

			parameters = list(signature(oracle.function).parameters.values())
			is_pydantic = (
				parameters
				and parameters[0].name not in _CONTEXT_PARAMS
				and isclass(parameters[0].annotation)
				and issubclass(parameters[0].annotation, BaseModel)
			)
			if is_pydantic:
				return oracle.function(validated_params, inst=inst, cand=cand)
			return oracle.function(**validated_params.model_dump(), inst=inst, cand=cand)

		except Exception as e:
			raise SeparationError(f'Error executing oracle {oracle_name}: {str(e)}') from e

	def describe(self) -> str:
		return self.registry.describe()
