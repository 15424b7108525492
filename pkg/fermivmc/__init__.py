import jax

# every tolerance in the engine assumes double precision
jax.config.update('jax_enable_x64', True)

__version__ = '0.3.0'
