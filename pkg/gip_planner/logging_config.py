import logging
import os
import sys

RESULT = 35

_LEVELS = {
	'result': RESULT,
	'info': logging.INFO,
	'debug': logging.DEBUG,
}
_QUIET_LOGGERS = ('matplotlib', 'PIL', 'numpy', 'scipy', 'networkx')


def addLoggingLevel(levelName: str, levelNum: int, methodName: str | None = None) -> None:
	"""
	Register `levelName` on the `logging` module and a `methodName` shortcut (default:
	`levelName.lower()`) on the logger class and the module.

	>>> addLoggingLevel('RESULT', 35)
	>>> logging.getLogger('gip_planner').result('optimum 3.0')

	Raises `AttributeError` when the name or the method is taken.
	"""
	methodName = methodName or levelName.lower()
	logger_class = logging.getLoggerClass()
	for owner, name in ((logging, levelName), (logging, methodName), (logger_class, methodName)):
		if hasattr(owner, name):
			raise AttributeError(f'{name} already defined in {owner.__name__}')

	def log_for_level(self, message, *args, **kwargs):
		if self.isEnabledFor(levelNum):
			self._log(levelNum, message, args, **kwargs)

	def log_to_root(message, *args, **kwargs):
		logging.log(levelNum, message, *args, **kwargs)

	logging.addLevelName(levelNum, levelName)
	setattr(logging, levelName, levelNum)
	setattr(logger_class, methodName, log_for_level)
	setattr(logging, methodName, log_to_root)


class SubpackageFormatter(logging.Formatter):
	"""Prints `gip_planner.search.service` as `search`."""

	def format(self, record: logging.LogRecord) -> str:
		if record.name.startswith('gip_planner.') and record.name.count('.') >= 2:
			record.name = record.name.split('.')[-2]
		return super().format(record)


def setup_logging() -> None:
	try:
		addLoggingLevel('RESULT', RESULT)
	except AttributeError:
		pass

	if logging.getLogger().hasHandlers():
		return

	log_type = os.getenv('GIP_LOGGING_LEVEL', 'info').lower()
	level = _LEVELS.get(log_type, logging.INFO)

	console = logging.StreamHandler(sys.stdout)
	if level == RESULT:
		console.setLevel(RESULT)
		console.setFormatter(SubpackageFormatter('%(message)s'))
	else:
		console.setFormatter(SubpackageFormatter('%(levelname)-8s [%(name)s] %(message)s'))

	root = logging.getLogger()
	root.handlers = [console]
	root.setLevel(level)

	gip_logger = logging.getLogger('gip_planner')
	gip_logger.propagate = False
	gip_logger.addHandler(console)
	gip_logger.setLevel(level)
	gip_logger.debug(f'gip_planner logging setup complete with level {log_type}')

	for name in _QUIET_LOGGERS:
		third_party = logging.getLogger(name)
		third_party.setLevel(logging.ERROR)
		third_party.propagate = False
