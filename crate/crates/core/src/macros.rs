/// Declares a named group of [`Param`](crate::numerics::Param)s together with
/// a matching gradient buffer of plain tensors.
///
/// Field order defines registry order, which in turn fixes the order of
/// gradient reduction and of the serialized parameter file.
macro_rules! param_group {
    (
        $(#[$meta:meta])*
        pub struct $name:ident / $grads:ident : $prefix:literal {
            $($(#[$fmeta:meta])* $field:ident),+ $(,)?
        }
    ) => {
        $(#[$meta])*
        #[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
        pub struct $name {
            $($(#[$fmeta])* pub $field: $crate::numerics::Param,)+
        }

        #[derive(Clone, Debug, PartialEq)]
        pub struct $grads {
            $(pub $field: $crate::numerics::Tensor,)+
        }

        impl $name {
            #[allow(clippy::too_many_arguments)]
            pub fn from_values($($field: $crate::numerics::Tensor),+) -> Self {
                $name {
                    $($field: $crate::numerics::Param::new(
                        concat!($prefix, ".", stringify!($field)),
                        $field,
                    ),)+
                }
            }

            pub fn params(&self) -> Vec<&$crate::numerics::Param> {
                vec![$(&self.$field),+]
            }

            pub fn params_mut(&mut self) -> Vec<&mut $crate::numerics::Param> {
                vec![$(&mut self.$field),+]
            }

            pub fn zero_grads(&self) -> $grads {
                $grads {
                    $($field: $crate::numerics::Tensor::zeros(self.$field.value.shape()),)+
                }
            }
        }

        impl $grads {
            pub fn tensors(&self) -> Vec<&$crate::numerics::Tensor> {
                vec![$(&self.$field),+]
            }

            pub fn tensors_mut(&mut self) -> Vec<&mut $crate::numerics::Tensor> {
                vec![$(&mut self.$field),+]
            }
        }
    };
}
