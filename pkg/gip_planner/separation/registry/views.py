from typing import Callable, Dict, Type

from pydantic import BaseModel, ConfigDict


class RegisteredOracle(BaseModel):
	"""Model for a registered separation oracle"""

	name: str
	description: str
	function: Callable
	param_model: Type[BaseModel]

	model_config = ConfigDict(arbitrary_types_allowed=True)

	def describe(self) -> str:
		params = ', '.join(self.param_model.model_json_schema().get('properties', {}))
		return f'{self.name}: {self.description} ({params or "no parameters"})'


class OracleModel(BaseModel):
	"""Base model for parameter models created from oracle signatures"""

	model_config = ConfigDict(arbitrary_types_allowed=True)


class OracleRegistry(BaseModel):
	"""Model representing the oracle registry"""

	oracles: Dict[str, RegisteredOracle] = {}

	def describe(self) -> str:
		return '\n'.join(oracle.describe() for oracle in self.oracles.values())
